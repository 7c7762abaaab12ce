use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;
use neural_implicit::discrete_geom::{load_obj, meyer_mean_curvature, vertex_geometry, TriMesh};
use neural_implicit::evaluation::{reconstruction_metrics, MeshReference, MetricReport, Reference};
use neural_implicit::implicit_geom::{curvatures, mean_curvature, ImplicitFunction};
use neural_implicit::net::{Checkpoint, SineMlp};
use neural_implicit::rbf::{mean_nearest_spacing, parse_kernel, RbfModel, MAX_CENTERS};
use neural_implicit::renderer::{render as render_image, NETWORK_STEP_SCALE};
use neural_implicit::sampler::Partition;
use neural_implicit::trainer::{final_checkpoint, logs_to_csv, normalization_from_metadata, train as run_training, Dataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{write_file, CliError};
use crate::{RenderSource, Source};

pub fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z but got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| format!("bad number {p:?}"))?;
    }
    Ok(out)
}

fn mesh_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".into())
}

fn load_model(path: &Path) -> Result<(SineMlp, Checkpoint), CliError> {
    let ck = Checkpoint::load(path)?;
    Ok((ck.clone().into_net()?, ck))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dataset(source: &Source, cfg: &RunConfig, seed: u64) -> Result<Dataset, CliError> {
    match (&source.mesh, &source.surface) {
        (Some(path), _) => Ok(Dataset::from_mesh(&mesh_name(path), &load_obj(path)?)?),
        (None, Some(name)) => Ok(Dataset::analytic(cfg.dataset.surface(name)?, cfg.dataset.points, seed)?),
        (None, None) => Err(CliError::Usage("either --mesh or --surface is required".into())),
    }
}

pub fn train(
    source: &Source,
    config: Option<&Path>,
    out: &Path,
    csv: Option<&Path>,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if cfg.train.checkpoint_dir.is_none() {
        let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.train.checkpoint_dir = Some(dir.to_path_buf());
    }
    let data = dataset(source, &cfg, cfg.train.seed)?;
    let total = cfg.train.epochs;
    let (net, logs) = run_training(&cfg.train, &data, &mut |log, _| {
        println!(
            "epoch {}/{} loss {:.6e} dirichlet_on {:.3e} {:.2}s",
            log.epoch,
            total,
            log.loss.total,
            log.loss.dirichlet_on.unwrap_or(f64::NAN),
            log.seconds
        );
        true
    })?;
    final_checkpoint(&net, &cfg.train, &data, logs.len()).save(out)?;
    let csv_path = csv.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("csv"));
    write_file(&csv_path, logs_to_csv(&logs))
}

pub struct RenderFlags {
    pub mode: Option<String>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub fov: Option<f64>,
    pub eye: Option<[f64; 3]>,
    pub look_at: Option<[f64; 3]>,
}

pub fn render(source: &RenderSource, config: Option<&Path>, flags: RenderFlags, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let mut camera = cfg.render.camera.clone();
    let mut rc = cfg.render.config.clone();
    if let Some(m) = &flags.mode {
        rc.mode = m.parse()?;
    }
    camera.width = flags.width.unwrap_or(camera.width);
    camera.height = flags.height.unwrap_or(camera.height);
    camera.fov_deg = flags.fov.unwrap_or(camera.fov_deg);
    camera.position = flags.eye.unwrap_or(camera.position);
    camera.look_at = flags.look_at.unwrap_or(camera.look_at);
    camera.validate()?;
    let rendering = match (&source.model, &source.surface) {
        (Some(path), _) => {
            let (net, _) = load_model(path)?;
            rc.step_scale = rc.step_scale.min(NETWORK_STEP_SCALE);
            render_image(&net, &camera, &rc)?
        }
        (None, Some(name)) => render_image(&cfg.dataset.surface(name)?, &camera, &rc)?,
        (None, None) => return Err(CliError::Usage("either --model or --surface is required".into())),
    };
    if rendering.singular > 0 {
        eprintln!("{} hit pixels had a vanishing gradient", rendering.singular);
    }
    rendering.image.save_ppm(out)?;
    Ok(())
}

/// Reference for metrics, in the frame the network was trained in.
fn reference(source: &Source, cfg: &RunConfig, ck: Option<&Checkpoint>) -> Result<(Box<dyn Reference>, String), CliError> {
    match (&source.mesh, &source.surface) {
        (Some(path), _) => {
            let mesh = load_obj(path)?;
            let norm = match ck {
                Some(ck) => normalization_from_metadata(&ck.metadata)?,
                None => None,
            };
            let mesh = match norm {
                Some(n) => mesh.transformed(|p| n.apply(p)),
                None => mesh.normalized(0.9).0,
            };
            Ok((Box::new(MeshReference::new(mesh)?), mesh_name(path)))
        }
        (None, Some(name)) => Ok((Box::new(cfg.dataset.surface(name)?), name.clone())),
        (None, None) => Err(CliError::Usage("either --mesh or --surface is required".into())),
    }
}

pub fn eval(
    model: &Path,
    source: &Source,
    config: Option<&Path>,
    repetitions: Option<usize>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(r) = repetitions {
        if r == 0 {
            return Err(CliError::Usage("--repetitions must be positive".into()));
        }
        cfg.eval.repetitions = r;
    }
    if let Some(s) = seed {
        cfg.eval.seed = s;
    }
    let (net, ck) = load_model(model)?;
    let (reference, name) = reference(source, &cfg, Some(&ck))?;
    let report = reconstruction_metrics(&net, reference.as_ref(), &cfg.eval);
    emit(out, &format!("{}\n{}\n", MetricReport::csv_header(), report.csv_row("ours", &name)))
}

const CURVATURE_HEADER: &str = "index,x,y,z,kappa1,kappa2,gaussian,mean\n";

pub fn curvature(mesh_path: &Path, method: &str, model: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let mesh: TriMesh = load_obj(mesh_path)?;
    let mut csv = String::from(CURVATURE_HEADER);
    match method {
        "discrete" => {
            let geometry = vertex_geometry(&mesh);
            let meyer = meyer_mean_curvature(&mesh);
            for (i, (g, h)) in geometry.iter().zip(meyer).enumerate() {
                let p = mesh.vertices[i];
                writeln!(csv, "{i},{},{},{},{},{},{},{h}", p.x, p.y, p.z, g.kappa1, g.kappa2, g.gaussian).unwrap();
            }
        }
        "neural" => {
            let path = model.ok_or_else(|| CliError::Usage("--method neural needs --model".into()))?;
            let (net, ck) = load_model(path)?;
            let norm = normalization_from_metadata(&ck.metadata)?;
            let (pts, scale): (Vec<Point3<f64>>, f64) = match norm {
                Some(n) => (mesh.vertices.iter().map(|p| n.apply(p)).collect(), n.scale),
                None => (mesh.vertices.clone(), 1.0),
            };
            // curvature scales inversely with length
            for (i, probe) in net.probes(&pts).iter().enumerate() {
                let p = mesh.vertices[i];
                let (k1, k2, k) = match curvatures(probe) {
                    Ok(r) => (r.kappa1 * scale, r.kappa2 * scale, r.gaussian * scale * scale),
                    Err(_) => (f64::NAN, f64::NAN, f64::NAN),
                };
                let h = mean_curvature(probe).map_or(f64::NAN, |h| h * scale);
                writeln!(csv, "{i},{},{},{},{k1},{k2},{k},{h}", p.x, p.y, p.z).unwrap();
            }
        }
        other => return Err(CliError::Usage(format!("unknown method {other:?}"))),
    }
    write_file(out, csv)
}

pub fn rbf(
    source: &Source,
    config: Option<&Path>,
    m: Option<usize>,
    kernel: Option<&str>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.eval.seed = s;
    }
    let m = m.unwrap_or(cfg.rbf.m);
    if m == 0 || 2 * m > MAX_CENTERS {
        return Err(CliError::Usage(format!(
            "--m must lie in 1..={} (dense solve budget)",
            MAX_CENTERS / 2
        )));
    }
    let (reference, name) = reference(source, &cfg, None)?;
    // fitting data come from ChaCha stream 0, evaluation from later streams
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
    let mut points: Vec<Point3<f64>> = (0..m).map(|_| reference.sample_surface(&mut rng).0).collect();
    let mut values = vec![0.0; m];
    for _ in 0..m {
        let p = cfg.eval.domain.sample(&mut rng);
        values.push(reference.value(&p));
        points.push(p);
    }
    let kernel = match (kernel, cfg.rbf.kernel) {
        (Some(k), _) => parse_kernel(k, mean_nearest_spacing(&points))?,
        (None, Some(k)) => k,
        (None, None) => parse_kernel("multiquadric", mean_nearest_spacing(&points))?,
    };
    let model = RbfModel::fit(&points, &values, kernel)?;
    let report = reconstruction_metrics(&model, reference.as_ref(), &cfg.eval);
    emit(out, &format!("{}\n{}\n", MetricReport::csv_header(), report.csv_row("rbf", &name)))
}

pub fn sample_stats(
    source: &Source,
    config: Option<&Path>,
    fractions: [f64; 3],
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let data = dataset(source, &cfg, seed.unwrap_or(cfg.train.seed))?;
    let features = data.features();
    let partition = Partition::from_fractions(&features, fractions)?;
    emit(out, &partition.summary_csv(&features))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec3_parsing() {
        assert_eq!(parse_vec3("1,-2.5, 3").unwrap(), [1.0, -2.5, 3.0]);
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_vec3("1,x,2").is_err());
    }
}
