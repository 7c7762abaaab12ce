//! Differential geometry of level sets of implicit functions.
//!
//! Everything here works from an [`ImplicitProbe`], i.e. the value, gradient
//! and Hessian of some function `f` at one point. The normal is
//! `N = ∇f/‖∇f‖` and the shape operator is the differential of `N`,
//! `dN = (I − N Nᵀ) Hf / ‖∇f‖`.
//!
//! Sign convention: principal curvatures are eigenvalues of `+dN` on the
//! tangent plane, so a sphere with outward normal has positive curvature and
//! `2H = div N` holds.
//!
//! Eigen-decomposition uses the two-sided projection
//! `(I − N Nᵀ) Hf (I − N Nᵀ) / ‖∇f‖`, which is symmetric for any probe and
//! coincides with `dN` on signed distance functions.

use nalgebra::{Matrix3, Point3, Vector3};
use rand::Rng;

use crate::dual::{cross3, dot3, norm3, scale3, sym_mul3, Real};
use crate::error::{Error, Result};
use crate::linalg::{orthogonal_complement, sym_eigen3};

/// Gradient norms at or below this are treated as singular.
pub const GRADIENT_EPS: f64 = 1e-8;

/// Value, gradient and Hessian of an implicit function at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImplicitProbe {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl ImplicitProbe {
    pub fn hessian_upper(&self) -> [f64; 6] {
        let h = &self.hessian;
        [
            h[(0, 0)],
            0.5 * (h[(0, 1)] + h[(1, 0)]),
            0.5 * (h[(0, 2)] + h[(2, 0)]),
            h[(1, 1)],
            0.5 * (h[(1, 2)] + h[(2, 1)]),
            h[(2, 2)],
        ]
    }

    pub fn gradient_array(&self) -> [f64; 3] {
        [self.gradient.x, self.gradient.y, self.gradient.z]
    }

    fn checked_norm(&self) -> Result<f64> {
        let n = self.gradient.norm();
        if n > GRADIENT_EPS && n.is_finite() {
            Ok(n)
        } else {
            Err(Error::SingularGradient { norm: n })
        }
    }

    pub fn normal(&self) -> Result<Vector3<f64>> {
        let n = self.checked_norm()?;
        Ok(self.gradient / n)
    }
}

/// Anything that can be evaluated and differentiated twice at a point.
/// Implementations must be safe for concurrent read-only use.
pub trait ImplicitFunction: Sync {
    fn value(&self, p: &Point3<f64>) -> f64;

    fn probe(&self, p: &Point3<f64>) -> ImplicitProbe;

    fn gradient(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.probe(p).gradient
    }

    /// Batched evaluation; implementations may override for throughput.
    fn values(&self, points: &[Point3<f64>]) -> Vec<f64> {
        points.iter().map(|p| self.value(p)).collect()
    }

    fn gradients(&self, points: &[Point3<f64>]) -> Vec<Vector3<f64>> {
        points.iter().map(|p| self.gradient(p)).collect()
    }

    fn probes(&self, points: &[Point3<f64>]) -> Vec<ImplicitProbe> {
        points.iter().map(|p| self.probe(p)).collect()
    }
}

/// Principal curvatures and frame at one point of a level set.
#[derive(Clone, Debug)]
pub struct CurvatureReport {
    pub normal: Vector3<f64>,
    /// The one-sided operator `(I − N Nᵀ) Hf / ‖∇f‖`.
    pub shape_operator: Matrix3<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub gaussian: f64,
    pub mean: f64,
    /// Principal directions are unreliable (near-umbilic point).
    pub umbilic: bool,
}

pub fn is_umbilic(kappa1: f64, kappa2: f64) -> bool {
    (kappa1 - kappa2).abs() < 1e-7 * (kappa1.abs() + kappa2.abs()).max(1.0)
}

pub fn shape_operator(probe: &ImplicitProbe) -> Result<Matrix3<f64>> {
    let g = probe.checked_norm()?;
    let n = probe.gradient / g;
    let proj = Matrix3::identity() - n * n.transpose();
    Ok(proj * probe.hessian / g)
}

/// Symmetric two-sided projection `(I − N Nᵀ) Hf (I − N Nᵀ) / ‖∇f‖`.
pub fn projected_shape_operator(probe: &ImplicitProbe) -> Result<Matrix3<f64>> {
    let g = probe.checked_norm()?;
    let n = probe.gradient / g;
    let proj = Matrix3::identity() - n * n.transpose();
    let h = 0.5 * (probe.hessian + probe.hessian.transpose());
    let s = proj * h * proj / g;
    Ok(0.5 * (s + s.transpose()))
}

pub fn curvatures(probe: &ImplicitProbe) -> Result<CurvatureReport> {
    let g = probe.checked_norm()?;
    let normal = probe.gradient / g;
    let shape = shape_operator(probe)?;
    let sym = projected_shape_operator(probe)?;
    let eig = sym_eigen3(&sym);

    // The normal is an exact null vector of the projected operator; pick it
    // by alignment so that flat tangent directions cannot be mistaken for it.
    let normal_idx = (0..3)
        .max_by(|&a, &b| {
            eig.vectors[a]
                .dot(&normal)
                .abs()
                .total_cmp(&eig.vectors[b].dot(&normal).abs())
        })
        .unwrap();
    let tangent: Vec<usize> = (0..3).filter(|&i| i != normal_idx).collect();
    // eigenvalues are sorted descending, so tangent[0] carries kappa1
    let (kappa1, kappa2) = (eig.values[tangent[0]], eig.values[tangent[1]]);
    let v = eig.vectors[tangent[0]];
    let e1 = (v - v.dot(&normal) * normal).normalize();
    let e2 = normal.cross(&e1).normalize();
    Ok(CurvatureReport {
        normal,
        shape_operator: shape,
        kappa1,
        kappa2,
        e1,
        e2,
        gaussian: kappa1 * kappa2,
        mean: 0.5 * (kappa1 + kappa2),
        umbilic: is_umbilic(kappa1, kappa2),
    })
}

/// Gaussian curvature from the bordered Hessian,
/// `K = −det([Hf ∇f; ∇fᵀ 0]) / ‖∇f‖⁴`.
pub fn gaussian_curvature(probe: &ImplicitProbe) -> Result<f64> {
    let g = probe.checked_norm()?;
    let h = &probe.hessian;
    let d = &probe.gradient;
    // det of the 4x4 bordered matrix = −dᵀ adj(H) d
    let adj = Matrix3::new(
        h[(1, 1)] * h[(2, 2)] - h[(1, 2)] * h[(2, 1)],
        h[(0, 2)] * h[(2, 1)] - h[(0, 1)] * h[(2, 2)],
        h[(0, 1)] * h[(1, 2)] - h[(0, 2)] * h[(1, 1)],
        h[(1, 2)] * h[(2, 0)] - h[(1, 0)] * h[(2, 2)],
        h[(0, 0)] * h[(2, 2)] - h[(0, 2)] * h[(2, 0)],
        h[(0, 2)] * h[(1, 0)] - h[(0, 0)] * h[(1, 2)],
        h[(1, 0)] * h[(2, 1)] - h[(1, 1)] * h[(2, 0)],
        h[(0, 1)] * h[(2, 0)] - h[(0, 0)] * h[(2, 1)],
        h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)],
    );
    let bordered_det = -(d.transpose() * adj * d)[(0, 0)];
    Ok(-bordered_det / g.powi(4))
}

/// Mean curvature as half the divergence of `∇f/‖∇f‖`.
pub fn mean_curvature(probe: &ImplicitProbe) -> Result<f64> {
    probe.checked_norm()?;
    Ok(mean_curvature_generic(&probe.gradient_array(), &probe.hessian_upper()))
}

/// Normal curvature `vᵀ S v` along a unit tangent vector.
pub fn normal_curvature(probe: &ImplicitProbe, v: &Vector3<f64>) -> Result<f64> {
    let n = probe.normal()?;
    let dot = v.dot(&n);
    if dot.abs() >= 1e-6 || (v.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::NotTangent { dot });
    }
    let s = projected_shape_operator(probe)?;
    Ok(v.dot(&(s * v)))
}

/// `(tr(Hf)‖∇f‖² − ∇fᵀ Hf ∇f) / (2‖∇f‖³)`.
pub(crate) fn mean_curvature_generic<T: Real>(g: &[T; 3], h: &[T; 6]) -> T {
    let gg = dot3(g, g);
    let gn = gg.sqrt();
    let trace = h[0] + h[3] + h[5];
    let ghg = dot3(g, &sym_mul3(h, g));
    (trace * gg - ghg) / (T::cst(2.0) * gg * gn)
}

/// Principal curvatures and maximal direction computed in a tangent basis.
pub(crate) struct PrincipalFrame<T> {
    pub kappa1: T,
    pub kappa2: T,
    pub e1: [T; 3],
}

/// Reduces the projected shape operator to the tangent plane and solves the
/// 2x2 symmetric eigenproblem in closed form. Returns `None` for singular
/// gradients.
pub(crate) fn principal_frame<T: Real>(g: &[T; 3], h: &[T; 6]) -> Option<PrincipalFrame<T>> {
    let gn = norm3(g);
    if !(gn.val() > GRADIENT_EPS) {
        return None;
    }
    let n = scale3(g, T::cst(1.0) / gn);
    // helper axis least aligned with the normal
    let nv = [n[0].val().abs(), n[1].val().abs(), n[2].val().abs()];
    let axis = if nv[0] <= nv[1] && nv[0] <= nv[2] {
        0
    } else if nv[1] <= nv[2] {
        1
    } else {
        2
    };
    let mut a = [T::cst(0.0); 3];
    a[axis] = T::cst(1.0);
    let an = dot3(&a, &n);
    let t1 = [a[0] - an * n[0], a[1] - an * n[1], a[2] - an * n[2]];
    let t1 = scale3(&t1, T::cst(1.0) / norm3(&t1));
    let t2 = cross3(&n, &t1);

    let ht1 = sym_mul3(h, &t1);
    let ht2 = sym_mul3(h, &t2);
    let m00 = dot3(&t1, &ht1) / gn;
    let m01 = dot3(&t1, &ht2) / gn;
    let m11 = dot3(&t2, &ht2) / gn;
    let mean = (m00 + m11).scale(0.5);
    let half_diff = (m00 - m11).scale(0.5);
    let disc = half_diff * half_diff + m01 * m01;
    let radius = if disc.val() > 0.0 { disc.sqrt() } else { T::cst(0.0) };
    let phi = m01.atan2(half_diff).scale(0.5);
    let (c, s) = (phi.cos(), phi.sin());
    let e1 = [
        c * t1[0] + s * t2[0],
        c * t1[1] + s * t2[1],
        c * t1[2] + s * t2[2],
    ];
    Some(PrincipalFrame {
        kappa1: mean + radius,
        kappa2: mean - radius,
        e1,
    })
}

// --- analytic reference surfaces --------------------------------------------

/// Closed-form signed distance functions used as ground truth.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AnalyticSurface {
    /// Centered at the origin.
    Sphere { radius: f64 },
    /// Centered at the origin, axis along z.
    Torus { major: f64, minor: f64 },
    /// `{p : ⟨n, p⟩ = offset}` with `n` normalized on use.
    Plane { normal: [f64; 3], offset: f64 },
}

/// One exact surface sample.
#[derive(Clone, Debug)]
pub struct SurfacePoint {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
}

impl AnalyticSurface {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AnalyticSurface::Sphere { radius } => *radius > 0.0,
            AnalyticSurface::Torus { major, minor } => *minor > 0.0 && major > minor,
            AnalyticSurface::Plane { normal, .. } => Vector3::from(*normal).norm() > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid analytic surface {self:?}")))
        }
    }

    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        match *self {
            AnalyticSurface::Sphere { radius } => p.coords.norm() - radius,
            AnalyticSurface::Torus { major, minor } => {
                let q = (p.x * p.x + p.y * p.y).sqrt() - major;
                (q * q + p.z * p.z).sqrt() - minor
            }
            AnalyticSurface::Plane { normal, offset } => {
                let n = Vector3::from(normal).normalize();
                n.dot(&p.coords) - offset
            }
        }
    }

    /// Exact probe. On the medial axis the gradient is reported as zero.
    pub fn exact_probe(&self, p: &Point3<f64>) -> ImplicitProbe {
        let value = self.sdf(p);
        match *self {
            AnalyticSurface::Sphere { .. } => {
                let r = p.coords.norm();
                if r == 0.0 {
                    return ImplicitProbe {
                        value,
                        gradient: Vector3::zeros(),
                        hessian: Matrix3::zeros(),
                    };
                }
                let n = p.coords / r;
                ImplicitProbe {
                    value,
                    gradient: n,
                    hessian: (Matrix3::identity() - n * n.transpose()) / r,
                }
            }
            AnalyticSurface::Torus { major, .. } => {
                let q = (p.x * p.x + p.y * p.y).sqrt();
                let radial = if q > 0.0 {
                    Vector3::new(p.x / q, p.y / q, 0.0)
                } else {
                    Vector3::x()
                };
                let u = p.coords - major * radial;
                let rho = u.norm();
                if rho == 0.0 || q == 0.0 {
                    return ImplicitProbe {
                        value,
                        gradient: Vector3::zeros(),
                        hessian: Matrix3::zeros(),
                    };
                }
                let n = u / rho;
                let phi = Vector3::new(-radial.y, radial.x, 0.0);
                let hessian =
                    (Matrix3::identity() - n * n.transpose() - (major / q) * phi * phi.transpose())
                        / rho;
                ImplicitProbe {
                    value,
                    gradient: n,
                    hessian,
                }
            }
            AnalyticSurface::Plane { normal, .. } => ImplicitProbe {
                value,
                gradient: Vector3::from(normal).normalize(),
                hessian: Matrix3::zeros(),
            },
        }
    }

    /// Exact geometry at the closest surface point to `p` (for points on the
    /// surface this is the point itself).
    pub fn surface_geometry(&self, p: &Point3<f64>) -> SurfacePoint {
        let probe = self.exact_probe(p);
        let normal = probe.gradient;
        let point = p - probe.value * normal;
        match *self {
            AnalyticSurface::Sphere { radius } => {
                let (e1, e2) = orthogonal_complement(&normal);
                SurfacePoint {
                    point,
                    normal,
                    kappa1: 1.0 / radius,
                    kappa2: 1.0 / radius,
                    e1,
                    e2,
                }
            }
            AnalyticSurface::Torus { major, minor } => {
                let q = (point.x * point.x + point.y * point.y).sqrt();
                let phi = Vector3::new(-point.y / q, point.x / q, 0.0);
                // tube curvature 1/r along the meridian, ring curvature
                // cosθ/(R + r cosθ) along the parallel
                let ring = (q - major) / (minor * q);
                let meridian = phi.cross(&normal).normalize();
                SurfacePoint {
                    point,
                    normal,
                    kappa1: 1.0 / minor,
                    kappa2: ring,
                    e1: meridian,
                    e2: phi,
                }
            }
            AnalyticSurface::Plane { .. } => {
                let (e1, e2) = orthogonal_complement(&normal);
                SurfacePoint {
                    point,
                    normal,
                    kappa1: 0.0,
                    kappa2: 0.0,
                    e1,
                    e2,
                }
            }
        }
    }

    /// Exact curvature report at a surface point.
    pub fn exact_curvatures(&self, p: &Point3<f64>) -> CurvatureReport {
        let s = self.surface_geometry(p);
        let probe = self.exact_probe(&s.point);
        CurvatureReport {
            normal: s.normal,
            shape_operator: shape_operator(&probe).unwrap_or_else(|_| Matrix3::zeros()),
            kappa1: s.kappa1,
            kappa2: s.kappa2,
            e1: s.e1,
            e2: s.e2,
            gaussian: s.kappa1 * s.kappa2,
            mean: 0.5 * (s.kappa1 + s.kappa2),
            umbilic: is_umbilic(s.kappa1, s.kappa2),
        }
    }

    /// Area-uniform random surface sample. Planes are sampled over the
    /// square `[-1,1]²` of their own tangent frame.
    pub fn sample_surface<R: Rng + ?Sized>(&self, rng: &mut R) -> SurfacePoint {
        let p = match *self {
            AnalyticSurface::Sphere { radius } => {
                let z: f64 = rng.random_range(-1.0..1.0);
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s = (1.0 - z * z).sqrt();
                Point3::new(radius * s * t.cos(), radius * s * t.sin(), radius * z)
            }
            AnalyticSurface::Torus { major, minor } => {
                // tube angle density ∝ R + r cosθ, by rejection
                let theta = loop {
                    let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let u: f64 = rng.random_range(0.0..1.0);
                    if u * (major + minor) <= major + minor * th.cos() {
                        break th;
                    }
                };
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let ring = major + minor * theta.cos();
                Point3::new(ring * phi.cos(), ring * phi.sin(), minor * theta.sin())
            }
            AnalyticSurface::Plane { normal, offset } => {
                let n = Vector3::from(normal).normalize();
                let (u, v) = orthogonal_complement(&n);
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                Point3::from(n * offset + a * u + b * v)
            }
        };
        self.surface_geometry(&p)
    }
}

impl ImplicitFunction for AnalyticSurface {
    fn value(&self, p: &Point3<f64>) -> f64 {
        self.sdf(p)
    }

    fn probe(&self, p: &Point3<f64>) -> ImplicitProbe {
        self.exact_probe(p)
    }
}

/// An implicit function given by a closure, probed with central differences.
/// Intended for tests and quick experiments, not for training.
pub struct FnImplicit<F>(pub F);

impl<F: Fn(&Point3<f64>) -> f64 + Sync> ImplicitFunction for FnImplicit<F> {
    fn value(&self, p: &Point3<f64>) -> f64 {
        (self.0)(p)
    }

    fn probe(&self, p: &Point3<f64>) -> ImplicitProbe {
        let h = 1e-4;
        let f = &self.0;
        let at = |d: Vector3<f64>| f(&(p + d));
        let mut gradient = Vector3::zeros();
        let mut hessian = Matrix3::zeros();
        let e = [Vector3::x() * h, Vector3::y() * h, Vector3::z() * h];
        let f0 = f(p);
        for j in 0..3 {
            gradient[j] = (at(e[j]) - at(-e[j])) / (2.0 * h);
            for k in 0..3 {
                hessian[(j, k)] = if j == k {
                    (at(e[j]) - 2.0 * f0 + at(-e[j])) / (h * h)
                } else {
                    (at(e[j] + e[k]) - at(e[j] - e[k]) - at(e[k] - e[j]) + at(-e[j] - e[k]))
                        / (4.0 * h * h)
                };
            }
        }
        ImplicitProbe {
            value: f0,
            gradient,
            hessian,
        }
    }
}
