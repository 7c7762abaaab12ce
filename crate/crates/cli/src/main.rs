//! `nisurf`: train, render and evaluate neural implicit surfaces.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "nisurf", version, about = "Neural implicit surfaces with curvature-aware training")]
struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Maximum number of worker threads.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Triangle mesh in OBJ format.
    #[arg(long)]
    pub mesh: Option<PathBuf>,

    /// Analytic surface.
    #[arg(long, value_parser = ["sphere", "torus"])]
    pub surface: Option<String>,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct RenderSource {
    /// Network checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Analytic surface.
    #[arg(long, value_parser = ["sphere", "torus"])]
    pub surface: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a network to a mesh or an analytic surface.
    Train {
        #[command(flatten)]
        source: Source,
        /// JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV (default: checkpoint path with .csv).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sphere-trace an image in binary PPM format.
    Render {
        #[command(flatten)]
        source: RenderSource,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = ["phong", "gaussian", "mean", "ward"])]
        mode: Option<String>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Vertical field of view in degrees.
        #[arg(long)]
        fov: Option<f64>,
        /// Camera position as `x,y,z`.
        #[arg(long, value_parser = commands::parse_vec3, allow_hyphen_values = true)]
        eye: Option<[f64; 3]>,
        #[arg(long, value_parser = commands::parse_vec3, allow_hyphen_values = true)]
        look_at: Option<[f64; 3]>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruction metrics of a trained network as a CSV row.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Output CSV (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-vertex curvature of a mesh, discrete or from a trained network.
    Curvature {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_parser = ["discrete", "neural"])]
        method: String,
        /// Network checkpoint, required for the neural method.
        #[arg(long, required_if_eq("method", "neural"))]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the RBF baseline and report its reconstruction metrics.
    Rbf {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        config: Option<PathBuf>,
        /// On-surface and off-surface sample count each.
        #[arg(long)]
        m: Option<usize>,
        /// `multiquadric`, `thin-plate` or `gaussian`, optionally `:c`.
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Curvature partition class sizes.
    SampleStats {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        n1: f64,
        #[arg(long, default_value_t = 0.4)]
        n2: f64,
        #[arg(long, default_value_t = 0.1)]
        n3: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global();
    }
    let result = match cli.command {
        Command::Train {
            source,
            config,
            out,
            csv,
            epochs,
        } => commands::train(&source, config.as_deref(), &out, csv.as_deref(), epochs, cli.seed),
        Command::Render {
            source,
            config,
            mode,
            width,
            height,
            fov,
            eye,
            look_at,
            out,
        } => commands::render(
            &source,
            config.as_deref(),
            commands::RenderFlags {
                mode,
                width,
                height,
                fov,
                eye,
                look_at,
            },
            &out,
        ),
        Command::Eval {
            model,
            source,
            config,
            repetitions,
            out,
        } => commands::eval(&model, &source, config.as_deref(), repetitions, out.as_deref(), cli.seed),
        Command::Curvature {
            mesh,
            method,
            model,
            out,
        } => commands::curvature(&mesh, &method, model.as_deref(), &out),
        Command::Rbf {
            source,
            config,
            m,
            kernel,
            out,
        } => commands::rbf(&source, config.as_deref(), m, kernel.as_deref(), out.as_deref(), cli.seed),
        Command::SampleStats {
            source,
            config,
            n1,
            n2,
            n3,
            out,
        } => commands::sample_stats(&source, config.as_deref(), [n1, n2, n3], out.as_deref(), cli.seed),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
