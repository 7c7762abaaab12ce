use std::path::Path;

use neural_implicit::evaluation::EvalOptions;
use neural_implicit::implicit_geom::AnalyticSurface;
use neural_implicit::rbf::Kernel;
use neural_implicit::renderer::{Camera, RenderConfig};
use neural_implicit::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Experiment manifest. Every section and field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    pub render: RenderSection,
    pub eval: EvalOptions,
    pub rbf: RbfSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Surface samples drawn from analytic surfaces.
    pub points: usize,
    pub sphere_radius: f64,
    pub torus_major: f64,
    pub torus_minor: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            points: 10_000,
            sphere_radius: 0.6,
            torus_major: 0.6,
            torus_minor: 0.25,
        }
    }
}

impl DatasetConfig {
    pub fn surface(&self, name: &str) -> Result<AnalyticSurface, CliError> {
        let s = match name {
            "sphere" => AnalyticSurface::Sphere {
                radius: self.sphere_radius,
            },
            "torus" => AnalyticSurface::Torus {
                major: self.torus_major,
                minor: self.torus_minor,
            },
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown surface {name:?} (expected sphere or torus)"
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    pub camera: Camera,
    #[serde(flatten)]
    pub config: RenderConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbfSection {
    /// On-surface and off-surface sample count each.
    pub m: usize,
    /// `None` picks a multiquadric with mean nearest-neighbour spacing.
    pub kernel: Option<Kernel>,
}

impl Default for RbfSection {
    fn default() -> Self {
        RbfSection { m: 2500, kernel: None }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        self.render.camera.validate()?;
        self.render.config.validate()?;
        if let Some(k) = &self.rbf.kernel {
            k.validate()?;
        }
        if self.dataset.points == 0 || self.eval.repetitions == 0 {
            return Err(CliError::Core(neural_implicit::Error::Config(
                "dataset.points and eval.repetitions must be positive".into(),
            )));
        }
        Ok(())
    }
}
