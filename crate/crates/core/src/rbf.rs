//! Radial-basis-function interpolation baseline.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::implicit_geom::{ImplicitFunction, ImplicitProbe};
use crate::sdf_oracle::KdTree;

/// Largest system solved densely.
pub const MAX_CENTERS: usize = 6000;

/// Systems whose LU pivots span more than this ratio are rejected.
const MIN_PIVOT_RATIO: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Kernel {
    /// `√(r² + c²)`
    Multiquadric { c: f64 },
    /// `r² log r`
    ThinPlate,
    /// `exp(−r²/c²)`
    Gaussian { c: f64 },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Multiquadric { c } | Kernel::Gaussian { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::Config(format!("kernel parameter must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }

    /// `φ`, `dφ/ds` and `d²φ/ds²` as functions of `s = r²`.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            Kernel::Multiquadric { c } => {
                let phi = (s + c * c).sqrt();
                (phi, 0.5 / phi, -0.25 / (phi * phi * phi))
            }
            Kernel::Gaussian { c } => {
                let c2 = c * c;
                let phi = (-s / c2).exp();
                (phi, -phi / c2, phi / (c2 * c2))
            }
            Kernel::ThinPlate => {
                if s <= 1e-300 {
                    (0.0, 0.0, 0.0)
                } else {
                    let l = s.ln();
                    (0.5 * s * l, 0.5 * (l + 1.0), 0.5 / s)
                }
            }
        }
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.eval(r * r).0
    }
}

/// Parses `multiquadric`, `thin-plate`, `gaussian`, optionally with `:c`.
/// A missing `c` takes `default_c`.
pub fn parse_kernel(s: &str, default_c: f64) -> Result<Kernel> {
    let (name, c) = match s.split_once(':') {
        Some((n, c)) => (
            n,
            c.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad kernel parameter in {s:?}")))?,
        ),
        None => (s, default_c),
    };
    let k = match name {
        "multiquadric" => Kernel::Multiquadric { c },
        "gaussian" => Kernel::Gaussian { c },
        "thin-plate" => Kernel::ThinPlate,
        _ => {
            return Err(Error::Config(format!(
                "unknown kernel {name:?} (expected multiquadric, thin-plate or gaussian)"
            )))
        }
    };
    k.validate()?;
    Ok(k)
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_kernel(s, 1.0)
    }
}

/// `s(p) = Σ λ_i φ(‖p − p_i‖)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfModel {
    pub centers: Vec<Point3<f64>>,
    pub coefficients: Vec<f64>,
    pub kernel: Kernel,
}

/// Mean distance from each point to its nearest other point.
pub fn mean_nearest_spacing(points: &[Point3<f64>]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let tree = KdTree::build(points.to_vec());
    let total: f64 = points
        .iter()
        .map(|p| tree.k_nearest(p, 2).get(1).map_or(0.0, |&(_, d)| d))
        .sum();
    total / points.len() as f64
}

impl RbfModel {
    /// Solves `Φλ = f` by LU with partial pivoting, followed by one round of
    /// iterative refinement.
    pub fn fit(points: &[Point3<f64>], values: &[f64], kernel: Kernel) -> Result<Self> {
        kernel.validate()?;
        let n = points.len();
        if n != values.len() {
            return Err(Error::SizeMismatch(format!("{n} centers but {} values", values.len())));
        }
        if n == 0 {
            return Err(Error::Config("RBF fit needs at least one center".into()));
        }
        if n > MAX_CENTERS {
            return Err(Error::Config(format!(
                "{n} centers exceed the dense solve budget of {MAX_CENTERS}"
            )));
        }
        if values.iter().chain(points.iter().flat_map(|p| p.iter())).any(|x| !x.is_finite()) {
            return Err(Error::Config("RBF data must be finite".into()));
        }
        let phi = DMatrix::from_fn(n, n, |i, j| kernel.eval((points[i] - points[j]).norm_squared()).0);
        let lu = phi.clone().lu();
        let u = lu.u();
        let diag = u.diagonal().map(f64::abs);
        let pivot_ratio = diag.min() / diag.max();
        if !(pivot_ratio > MIN_PIVOT_RATIO) {
            return Err(Error::SingularSystem { pivot_ratio });
        }
        let rhs = DVector::from_column_slice(values);
        let mut lambda = lu.solve(&rhs).ok_or(Error::SingularSystem { pivot_ratio })?;
        let residual = &rhs - &phi * &lambda;
        if let Some(corr) = lu.solve(&residual) {
            lambda += corr;
        }
        Ok(RbfModel {
            centers: points.to_vec(),
            coefficients: lambda.as_slice().to_vec(),
            kernel,
        })
    }

    /// Multiquadric fit with `c` set to the mean nearest-neighbour spacing.
    pub fn fit_default(points: &[Point3<f64>], values: &[f64]) -> Result<Self> {
        let c = mean_nearest_spacing(points);
        RbfModel::fit(points, values, Kernel::Multiquadric { c })
    }

    pub fn evaluate(&self, p: &Point3<f64>) -> f64 {
        self.centers
            .iter()
            .zip(&self.coefficients)
            .map(|(c, l)| l * self.kernel.eval((p - c).norm_squared()).0)
            .sum()
    }

    /// Largest `|s(p_i) − f_i|` over the centers.
    pub fn max_residual(&self, values: &[f64]) -> f64 {
        self.values(&self.centers)
            .iter()
            .zip(values)
            .map(|(s, f)| (s - f).abs())
            .fold(0.0, f64::max)
    }
}

impl ImplicitFunction for RbfModel {
    fn value(&self, p: &Point3<f64>) -> f64 {
        self.evaluate(p)
    }

    /// Analytic gradient and Hessian of the interpolant.
    fn probe(&self, p: &Point3<f64>) -> ImplicitProbe {
        let mut value = 0.0;
        let mut gradient = Vector3::zeros();
        let mut hessian = Matrix3::zeros();
        for (c, l) in self.centers.iter().zip(&self.coefficients) {
            let d = p - c;
            let (phi, ds, dss) = self.kernel.eval(d.norm_squared());
            value += l * phi;
            gradient += (2.0 * l * ds) * d;
            hessian += (4.0 * l * dss) * d * d.transpose();
            hessian += Matrix3::from_diagonal_element(2.0 * l * ds);
        }
        ImplicitProbe {
            value,
            gradient,
            hessian,
        }
    }

    fn values(&self, points: &[Point3<f64>]) -> Vec<f64> {
        let chunks: Vec<&[Point3<f64>]> = points.chunks(256).collect();
        crate::par_map(&chunks, |c| c.iter().map(|p| self.evaluate(p)).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect()
    }

    fn gradients(&self, points: &[Point3<f64>]) -> Vec<Vector3<f64>> {
        let chunks: Vec<&[Point3<f64>]> = points.chunks(256).collect();
        crate::par_map(&chunks, |c| c.iter().map(|p| self.probe(p).gradient).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect()
    }
}
