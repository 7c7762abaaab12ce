//! Browser demo. A `Demo` holds one analytic surface and, once training has
//! started, a small network fitted to it; both can be sphere-traced and
//! probed for curvature from JavaScript.

use nalgebra::Point3;
use neural_implicit::implicit_geom::{curvatures, mean_curvature, AnalyticSurface, ImplicitFunction};
use neural_implicit::loss::CurvMode;
use neural_implicit::net::SineMlp;
use neural_implicit::renderer::{render, Camera, RenderConfig, ShadingMode, NETWORK_STEP_SCALE};
use neural_implicit::trainer::{Dataset, TrainConfig, Trainer};
use wasm_bindgen::prelude::*;

const DEMO_POINTS: usize = 2000;

// Plain strings cross into JavaScript as thrown values; unlike `JsError`
// they can also be built in native tests.
fn js(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn surface(name: &str) -> Result<AnalyticSurface, String> {
    match name {
        "sphere" => Ok(AnalyticSurface::Sphere { radius: 0.6 }),
        "torus" => Ok(AnalyticSurface::Torus { major: 0.6, minor: 0.25 }),
        _ => Err(js(format!("unknown surface {name:?}"))),
    }
}

/// Small, fast settings: the full-size network is too slow for interactive use.
fn demo_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        layer_dims: vec![3, 32, 32, 1],
        seed,
        ..TrainConfig::default()
    };
    cfg.learning_rate = 5e-4;
    cfg.batch.m = 400;
    cfg.weights.w_dir_align = 0.0;
    cfg.weights.w_curv_match = 0.0;
    cfg.weights.curv_mode = CurvMode::Off;
    cfg.weights.w_dirichlet_off = cfg.weights.w_dirichlet_on;
    cfg
}

struct Fit {
    data: Dataset,
    trainer: Trainer,
}

#[wasm_bindgen]
pub struct Demo {
    surface: AnalyticSurface,
    camera: Camera,
    fit: Option<Fit>,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(surface_name: &str, width: usize, height: usize, seed: u64) -> Result<Demo, String> {
        let camera = Camera {
            width,
            height,
            ..Camera::default()
        };
        camera.validate().map_err(js)?;
        Ok(Demo {
            surface: surface(surface_name)?,
            camera,
            fit: None,
            seed,
        })
    }

    /// Switches the surface and discards any trained network.
    pub fn set_surface(&mut self, name: &str) -> Result<(), String> {
        self.surface = surface(name)?;
        self.fit = None;
        Ok(())
    }

    /// Places the camera on a sphere of radius 3 around the origin.
    pub fn orbit(&mut self, yaw_deg: f64, pitch_deg: f64) {
        let (yaw, pitch) = (yaw_deg.to_radians(), pitch_deg.clamp(-89.0, 89.0).to_radians());
        let r = 3.0;
        self.camera.position = [
            r * pitch.cos() * yaw.sin(),
            r * pitch.sin(),
            -r * pitch.cos() * yaw.cos(),
        ];
    }

    /// Runs `steps` Adam steps on the network, creating it on first use.
    /// Returns the last total loss.
    pub fn train(&mut self, steps: usize) -> Result<f64, String> {
        if self.fit.is_none() {
            let cfg = demo_config(self.seed);
            let data = Dataset::analytic(self.surface, DEMO_POINTS, self.seed).map_err(js)?;
            let net = SineMlp::init_siren(&cfg.layer_dims, cfg.omega0, cfg.seed).map_err(js)?;
            let trainer = Trainer::new(net, &cfg, &data).map_err(js)?;
            self.fit = Some(Fit { data, trainer });
        }
        let fit = self.fit.as_mut().expect("created above");
        let mut loss = f64::NAN;
        for _ in 0..steps {
            loss = fit.trainer.step(&fit.data).map_err(js)?.0.total;
        }
        Ok(loss)
    }

    pub fn steps_taken(&self) -> usize {
        self.fit.as_ref().map_or(0, |f| f.trainer.steps_taken())
    }

    /// RGBA pixels, row-major from the top, ready for `ImageData`.
    /// `network` selects the trained network instead of the exact surface.
    pub fn render(&self, mode: &str, network: bool) -> Result<Vec<u8>, String> {
        let mut cfg = RenderConfig {
            mode: mode.parse::<ShadingMode>().map_err(js)?,
            max_iterations: 60,
            ..RenderConfig::default()
        };
        let f = self.function(network, &mut cfg)?;
        let image = render(f, &self.camera, &cfg).map_err(js)?.image;
        Ok(image.pixels.iter().flat_map(|p| [p[0], p[1], p[2], 255]).collect())
    }

    /// Hit point and curvature under a pixel as
    /// `[x, y, z, kappa1, kappa2, gaussian, mean]`, or empty on a miss.
    pub fn pick(&self, col: usize, row: usize, network: bool) -> Result<Vec<f64>, String> {
        let mut cfg = RenderConfig::default();
        let f = self.function(network, &mut cfg)?;
        let (origin, dir) = self.camera.ray(col, row).map_err(js)?;
        let Some(hit) = neural_implicit::renderer::sphere_trace(f, &origin, &dir, &cfg) else {
            return Ok(Vec::new());
        };
        let probe = f.probe(&hit.point);
        let p: Point3<f64> = hit.point;
        let (k1, k2, k) = curvatures(&probe).map_or((f64::NAN, f64::NAN, f64::NAN), |c| (c.kappa1, c.kappa2, c.gaussian));
        let h = mean_curvature(&probe).unwrap_or(f64::NAN);
        Ok(vec![p.x, p.y, p.z, k1, k2, k, h])
    }
}

impl Demo {
    fn function(&self, network: bool, cfg: &mut RenderConfig) -> Result<&dyn ImplicitFunction, String> {
        if !network {
            return Ok(&self.surface);
        }
        let fit = self.fit.as_ref().ok_or_else(|| js("no network yet; train first"))?;
        cfg.step_scale = NETWORK_STEP_SCALE;
        Ok(&fit.trainer.net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_and_picks_the_sphere() {
        let demo = Demo::new("sphere", 24, 24, 0).unwrap();
        let rgba = demo.render("phong", false).unwrap();
        assert_eq!(rgba.len(), 24 * 24 * 4);
        let picked = demo.pick(12, 12, false).unwrap();
        assert_eq!(picked.len(), 7);
        assert!((picked[3] - 1.0 / 0.6).abs() < 1e-3, "{picked:?}");
        assert!((picked[6] - 1.0 / 0.6).abs() < 1e-3);
        assert!(demo.pick(0, 0, false).unwrap().is_empty());
    }

    #[test]
    fn training_lowers_the_loss() {
        let mut demo = Demo::new("torus", 16, 16, 1).unwrap();
        assert!(demo.render("mean", true).is_err());
        let first = demo.train(1).unwrap();
        let later = demo.train(40).unwrap();
        assert!(later < first, "{later} vs {first}");
        assert_eq!(demo.steps_taken(), 41);
        assert_eq!(demo.render("gaussian", true).unwrap().len(), 16 * 16 * 4);
    }
}
