//! Sphere tracing with Phong, curvature and Ward anisotropic shading.

use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::implicit_geom::{curvatures, gaussian_curvature, mean_curvature, ImplicitFunction, ImplicitProbe, GRADIENT_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            position: [0.0, 0.0, -3.0],
            look_at: [0.0; 3],
            up: [0.0, 1.0, 0.0],
            fov_deg: 45.0,
            width: 256,
            height: 256,
        }
    }
}

/// Orthonormal camera frame: right, true up, forward.
struct Frame {
    origin: Point3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    forward: Vector3<f64>,
    half_h: f64,
    half_w: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        self.frame().map(|_| ())
    }

    fn frame(&self) -> Result<Frame> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::Config(format!("field of view {} out of (0, 180)", self.fov_deg)));
        }
        let origin = Point3::from(self.position);
        let forward = (Point3::from(self.look_at) - origin)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Config("camera position equals look-at point".into()))?;
        let right = forward
            .cross(&Vector3::from(self.up))
            .try_normalize(1e-9)
            .ok_or_else(|| Error::Config("camera up vector is collinear with the view direction".into()))?;
        let up = right.cross(&forward);
        let half_h = (0.5 * self.fov_deg.to_radians()).tan();
        Ok(Frame {
            origin,
            right,
            up,
            forward,
            half_h,
            half_w: half_h * self.width as f64 / self.height as f64,
        })
    }

    /// Primary ray through the center of pixel `(col, row)`, row 0 on top.
    pub fn ray(&self, col: usize, row: usize) -> Result<(Point3<f64>, Vector3<f64>)> {
        let fr = self.frame()?;
        Ok((fr.origin, fr.direction(self, col, row)))
    }
}

impl Frame {
    fn direction(&self, cam: &Camera, col: usize, row: usize) -> Vector3<f64> {
        let x = ((col as f64 + 0.5) / cam.width as f64 * 2.0 - 1.0) * self.half_w;
        let y = (1.0 - (row as f64 + 0.5) / cam.height as f64 * 2.0) * self.half_h;
        (self.forward + x * self.right + y * self.up).normalize()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShadingMode {
    #[default]
    Phong,
    Gaussian,
    Mean,
    Ward,
}

impl FromStr for ShadingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phong" => Ok(ShadingMode::Phong),
            "gaussian" => Ok(ShadingMode::Gaussian),
            "mean" => Ok(ShadingMode::Mean),
            "ward" => Ok(ShadingMode::Ward),
            _ => Err(Error::Config(format!(
                "unknown shading mode {s:?} (expected phong, gaussian, mean or ward)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub mode: ShadingMode,
    pub max_iterations: usize,
    pub hit_epsilon: f64,
    /// Ray parameter where marching starts.
    pub t_near: f64,
    pub t_max: f64,
    /// Step scale; below 1 for fields that are not exactly 1-Lipschitz.
    pub step_scale: f64,
    /// Direction towards the light; `None` places it at the camera.
    pub light: Option<[f64; 3]>,
    pub ward_alpha: [f64; 2],
    /// Curvature mapped to blue at the low end and red at the high end.
    pub curvature_range: [f64; 2],
    pub background: [f64; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            mode: ShadingMode::Phong,
            max_iterations: 80,
            hit_epsilon: 1e-4,
            t_near: 0.0,
            t_max: 10.0,
            step_scale: 1.0,
            light: None,
            ward_alpha: [0.2, 0.5],
            curvature_range: [-2.0, 2.0],
            background: [0.0; 3],
        }
    }
}

/// Step scale used for trained networks.
pub const NETWORK_STEP_SCALE: f64 = 0.9;

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.hit_epsilon > 0.0) || !(self.t_max > self.t_near) {
            return Err(Error::Config("need hit_epsilon > 0 and t_max > t_near".into()));
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return Err(Error::Config("step_scale must lie in (0, 1]".into()));
        }
        if !(self.ward_alpha[0] > 0.0 && self.ward_alpha[1] > 0.0) {
            return Err(Error::Config("ward alphas must be positive".into()));
        }
        if !(self.curvature_range[1] > self.curvature_range[0]) {
            return Err(Error::Config("curvature range must be increasing".into()));
        }
        Ok(())
    }

    fn light_dir(&self, view: &Vector3<f64>) -> Vector3<f64> {
        match self.light {
            Some(l) => Vector3::from(l).try_normalize(1e-12).unwrap_or(*view),
            None => *view,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub point: Point3<f64>,
    pub t: f64,
    pub iterations: usize,
}

/// Marches `p ← p + s·f(p)·d` until `|f| < ε`; `None` when the iteration or
/// distance budget runs out.
pub fn sphere_trace(f: &dyn ImplicitFunction, origin: &Point3<f64>, dir: &Vector3<f64>, cfg: &RenderConfig) -> Option<Hit> {
    let mut t = cfg.t_near;
    for it in 0..cfg.max_iterations {
        let p = origin + t * dir;
        let v = f.value(&p);
        if v.abs() < cfg.hit_epsilon {
            return Some(Hit {
                point: p,
                t,
                iterations: it,
            });
        }
        t += cfg.step_scale * v;
        if !(t <= cfg.t_max && t >= cfg.t_near) {
            return None;
        }
    }
    None
}

/// Ward anisotropic specular coefficient; zero when light or viewer is
/// below the tangent plane.
pub fn ward_specular(
    n: &Vector3<f64>,
    l: &Vector3<f64>,
    v: &Vector3<f64>,
    e1: &Vector3<f64>,
    e2: &Vector3<f64>,
    alpha1: f64,
    alpha2: f64,
) -> f64 {
    let (nl, nv) = (n.dot(l), n.dot(v));
    if nl <= 0.0 || nv <= 0.0 {
        return 0.0;
    }
    let Some(h) = (v + l).try_normalize(1e-12) else {
        return 0.0;
    };
    let a = h.dot(e1) / alpha1;
    let b = h.dot(e2) / alpha2;
    let expo = -2.0 * (a * a + b * b) / (1.0 + n.dot(&h));
    expo.exp() / (4.0 * std::f64::consts::PI * alpha1 * alpha2 * (nl * nv).sqrt())
}

/// Blue → white → red over `[lo, hi]`, clamped.
pub fn curvature_color(c: f64, lo: f64, hi: f64) -> [f64; 3] {
    let t = ((c - lo) / (hi - lo)).clamp(0.0, 1.0);
    if t.is_nan() {
        return [1.0; 3];
    }
    if t < 0.5 {
        let s = 2.0 * t;
        [s, s, 1.0]
    } else {
        let s = 2.0 * (1.0 - t);
        [1.0, s, s]
    }
}

/// Color of a hit from its probe; `None` when the gradient is singular.
pub fn shade(probe: &ImplicitProbe, view: &Vector3<f64>, cfg: &RenderConfig) -> Option<[f64; 3]> {
    let g = probe.gradient;
    let norm = g.norm();
    if !(norm >= GRADIENT_EPS) {
        return None;
    }
    let n = g / norm;
    let l = cfg.light_dir(view);
    let diffuse = n.dot(&l).max(0.0);
    let [lo, hi] = cfg.curvature_range;
    let rgb = match cfg.mode {
        ShadingMode::Phong => {
            let r = 2.0 * n.dot(&l) * n - l;
            let spec = if diffuse > 0.0 { r.dot(view).max(0.0).powi(32) } else { 0.0 };
            let c = 0.1 + 0.6 * diffuse + 0.3 * spec;
            [c, c, c]
        }
        ShadingMode::Gaussian => curvature_color(gaussian_curvature(probe).ok()?, lo, hi),
        ShadingMode::Mean => curvature_color(mean_curvature(probe).ok()?, lo, hi),
        ShadingMode::Ward => {
            let rep = curvatures(probe).ok()?;
            let [a1, a2] = cfg.ward_alpha;
            let k = ward_specular(&n, &l, view, &rep.e1, &rep.e2, a1, a2);
            let c = (0.5 / std::f64::consts::PI + 0.5 * k) * diffuse;
            let g = 0.05 + 0.5 * diffuse;
            [g + c, g + c, g + c]
        }
    };
    Some(rgb.map(|x| x.clamp(0.0, 1.0)))
}

/// 8-bit RGB image, rows top to bottom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn get(&self, col: usize, row: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

fn to_byte(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rendering {
    pub image: Image,
    pub hits: usize,
    /// Hits shaded as background because the gradient vanished there.
    pub singular: usize,
}

/// One primary ray per pixel. Rows are traced independently, with the rays
/// of a row marched together so networks can evaluate them in one batch.
pub fn render(f: &dyn ImplicitFunction, camera: &Camera, cfg: &RenderConfig) -> Result<Rendering> {
    cfg.validate()?;
    let frame = camera.frame()?;
    let rows: Vec<usize> = (0..camera.height).collect();
    let bg = cfg.background;
    let traced = crate::par_map(&rows, |&row| {
        let dirs: Vec<Vector3<f64>> = (0..camera.width).map(|c| frame.direction(camera, c, row)).collect();
        let mut t = vec![cfg.t_near; camera.width];
        let mut hit = vec![false; camera.width];
        let mut active: Vec<usize> = (0..camera.width).collect();
        for _ in 0..cfg.max_iterations {
            if active.is_empty() {
                break;
            }
            let pts: Vec<Point3<f64>> = active.iter().map(|&i| frame.origin + t[i] * dirs[i]).collect();
            let vals = f.values(&pts);
            let mut next = Vec::with_capacity(active.len());
            for (&i, v) in active.iter().zip(vals) {
                if v.abs() < cfg.hit_epsilon {
                    hit[i] = true;
                    continue;
                }
                t[i] += cfg.step_scale * v;
                if t[i] <= cfg.t_max && t[i] >= cfg.t_near {
                    next.push(i);
                }
            }
            active = next;
        }
        let hits: Vec<usize> = (0..camera.width).filter(|&i| hit[i]).collect();
        let pts: Vec<Point3<f64>> = hits.iter().map(|&i| frame.origin + t[i] * dirs[i]).collect();
        let probes = match cfg.mode {
            ShadingMode::Phong => f
                .gradients(&pts)
                .into_iter()
                .map(|gradient| ImplicitProbe {
                    value: f64::NAN,
                    gradient,
                    hessian: nalgebra::Matrix3::zeros(),
                })
                .collect(),
            _ => f.probes(&pts),
        };
        let mut line = vec![bg.map(to_byte); camera.width];
        let mut singular = 0;
        for (&i, probe) in hits.iter().zip(&probes) {
            match shade(probe, &-dirs[i], cfg) {
                Some(c) => line[i] = c.map(to_byte),
                None => singular += 1,
            }
        }
        (line, hits.len(), singular)
    });
    let mut pixels = Vec::with_capacity(camera.width * camera.height);
    let (mut hits, mut singular) = (0, 0);
    for (line, h, s) in traced {
        pixels.extend(line);
        hits += h;
        singular += s;
    }
    Ok(Rendering {
        image: Image {
            width: camera.width,
            height: camera.height,
            pixels,
        },
        hits,
        singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit_geom::{AnalyticSurface, FnImplicit};
    use proptest::prelude::*;

    fn unit_sphere() -> AnalyticSurface {
        AnalyticSurface::Sphere { radius: 1.0 }
    }

    #[test]
    fn trace_hits_sphere_head_on() {
        let cfg = RenderConfig::default();
        let h = sphere_trace(&unit_sphere(), &Point3::new(0.0, 0.0, -3.0), &Vector3::z(), &cfg).unwrap();
        assert!((h.t - 2.0).abs() < cfg.hit_epsilon);
        assert!((h.point - Point3::new(0.0, 0.0, -1.0)).norm() < cfg.hit_epsilon);
    }

    #[test]
    fn trace_misses() {
        let cfg = RenderConfig::default();
        assert!(sphere_trace(&unit_sphere(), &Point3::new(0.0, 0.0, -3.0), &Vector3::y(), &cfg).is_none());
        // axial ray through the hole: the closest approach to the tube is R − r > 0
        let torus = AnalyticSurface::Torus {
            major: 2.0,
            minor: 0.5,
        };
        assert!(sphere_trace(&torus, &Point3::new(0.0, 0.0, -5.0), &Vector3::z(), &cfg).is_none());
        // a ray through the tube hits where the analytic intersection says
        let h = sphere_trace(&torus, &Point3::new(2.0, 0.0, -5.0), &Vector3::z(), &cfg).unwrap();
        assert!((h.t - 4.5).abs() < 1e-3, "{}", h.t);
    }

    #[test]
    fn ward_hand_value() {
        let n = Vector3::z();
        let (e1, e2) = (Vector3::x(), Vector3::y());
        let k = ward_specular(&n, &n, &n, &e1, &e2, 0.5, 0.5);
        assert!((k - 1.0 / std::f64::consts::PI).abs() < 1e-12);
        let k = ward_specular(&n, &n, &n, &e1, &e2, 0.2, 0.7);
        assert!((k - 1.0 / (4.0 * std::f64::consts::PI * 0.2 * 0.7)).abs() < 1e-12);
        assert_eq!(ward_specular(&n, &-n, &n, &e1, &e2, 0.5, 0.5), 0.0);
    }

    proptest! {
        #[test]
        fn ward_swap_symmetry(
            lx in -1.0..1.0f64, ly in -1.0..1.0f64,
            vx in -1.0..1.0f64, vy in -1.0..1.0f64,
            a1 in 0.05..1.0f64, a2 in 0.05..1.0f64,
        ) {
            let n = Vector3::z();
            let l = Vector3::new(lx, ly, 1.0).normalize();
            let v = Vector3::new(vx, vy, 1.0).normalize();
            let (e1, e2) = (Vector3::x(), Vector3::y());
            let a = ward_specular(&n, &l, &v, &e1, &e2, a1, a2);
            let b = ward_specular(&n, &l, &v, &e2, &e1, a2, a1);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn silhouette_matches_pinhole_projection() {
        let cam = Camera::default();
        let cfg = RenderConfig::default();
        let r = render(&unit_sphere(), &cam, &cfg).unwrap();
        // angular radius asin(1/3), projected through tan onto the image plane
        let expected = (1.0f64 / 3.0).asin().tan() / (0.5 * cam.fov_deg.to_radians()).tan() * cam.height as f64 / 2.0;
        let measured = (r.hits as f64 / std::f64::consts::PI).sqrt();
        assert!((measured - expected).abs() < 1.0, "{measured} vs {expected}");
    }

    #[test]
    fn constant_curvature_gives_constant_color() {
        let cam = Camera {
            width: 64,
            height: 64,
            ..Default::default()
        };
        let cfg = RenderConfig {
            mode: ShadingMode::Gaussian,
            curvature_range: [0.0, 2.0],
            ..Default::default()
        };
        let r = render(&unit_sphere(), &cam, &cfg).unwrap();
        assert!(r.hits > 0 && r.singular == 0);
        let hit_px: Vec<_> = r.image.pixels.iter().filter(|p| **p != [0, 0, 0]).collect();
        assert_eq!(hit_px.len(), r.hits);
        assert!(hit_px.iter().all(|p| **p == [255, 255, 255]));
    }

    #[test]
    fn plane_mean_curvature_is_mid_color() {
        let plane = AnalyticSurface::Plane {
            normal: [0.0, 0.0, -1.0],
            offset: 0.0,
        };
        let cam = Camera {
            width: 16,
            height: 16,
            ..Default::default()
        };
        let cfg = RenderConfig {
            mode: ShadingMode::Mean,
            ..Default::default()
        };
        let r = render(&plane, &cam, &cfg).unwrap();
        assert_eq!(r.hits, 256);
        assert!(r.image.pixels.iter().all(|p| *p == [255, 255, 255]));
    }

    #[test]
    fn empty_scene_is_background() {
        let empty = FnImplicit(|_: &Point3<f64>| 1.0);
        let cam = Camera {
            width: 8,
            height: 8,
            ..Default::default()
        };
        let r = render(&empty, &cam, &RenderConfig::default()).unwrap();
        assert_eq!(r.hits, 0);
        assert!(r.image.pixels.iter().all(|p| *p == [0, 0, 0]));
    }

    #[test]
    fn rendering_is_deterministic_and_ppm_sized() {
        let torus = AnalyticSurface::Torus {
            major: 0.6,
            minor: 0.25,
        };
        let cam = Camera {
            position: [0.0, 1.5, -2.0],
            width: 40,
            height: 30,
            ..Default::default()
        };
        for mode in [ShadingMode::Phong, ShadingMode::Ward, ShadingMode::Mean] {
            let cfg = RenderConfig {
                mode,
                ..Default::default()
            };
            let a = render(&torus, &cam, &cfg).unwrap();
            let b = render(&torus, &cam, &cfg).unwrap();
            assert_eq!(a, b);
            assert!(a.hits > 100);
            let ppm = a.image.to_ppm();
            assert!(ppm.starts_with(b"P6\n40 30\n255\n"));
            assert_eq!(ppm.len(), "P6\n40 30\n255\n".len() + 40 * 30 * 3);
        }
    }

    #[test]
    fn no_overshoot_on_exact_sdfs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = RenderConfig::default();
        let shapes = [
            unit_sphere(),
            AnalyticSurface::Torus {
                major: 0.6,
                minor: 0.25,
            },
        ];
        let mut hits = 0;
        for i in 0..10_000 {
            let f = &shapes[i % 2];
            let o = Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), -3.0);
            let target = Point3::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let d = (target - o).normalize();
            if let Some(h) = sphere_trace(f, &o, &d, &cfg) {
                hits += 1;
                assert!(f.value(&h.point) >= -cfg.hit_epsilon);
            }
        }
        assert!(hits > 1000);
    }

    #[test]
    fn bad_camera_and_mode() {
        let cam = Camera {
            up: [0.0, 0.0, 1.0],
            ..Default::default()
        };
        assert!(matches!(cam.validate(), Err(Error::Config(_))));
        assert!("toon".parse::<ShadingMode>().is_err());
        assert_eq!("ward".parse::<ShadingMode>().unwrap(), ShadingMode::Ward);
    }
}
