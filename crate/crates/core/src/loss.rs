//! Training loss terms.
//!
//! Every term is a mean of per-point contributions written once, generically
//! over [`Real`]. Evaluating them on [`Dual`] numbers seeded with the network
//! jet channels `(f, ∇f, Hf)` yields the adjoint of the total loss with
//! respect to those channels, which [`SineMlp::backward`] turns into a
//! parameter gradient.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dual::{dot3, norm3, Dual, Real};
use crate::error::{Error, Result};
use crate::implicit_geom::{
    is_umbilic, mean_curvature_generic, principal_frame, ImplicitFunction, ImplicitProbe,
    GRADIENT_EPS,
};
use crate::net::{JetOrder, ParamTangent, SineMlp};
use crate::sampler::{Minibatch, OnSurfaceSample};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvMode {
    Off,
    Principal,
    #[default]
    Mean,
}

impl std::str::FromStr for CurvMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(CurvMode::Off),
            "principal" => Ok(CurvMode::Principal),
            "mean" => Ok(CurvMode::Mean),
            _ => Err(Error::Config(format!("unknown curvature mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w_eikonal: f64,
    pub w_dirichlet_on: f64,
    pub w_dirichlet_off: f64,
    pub w_neumann: f64,
    pub w_dir_align: f64,
    pub w_curv_match: f64,
    /// Weight of the `exp(−100|f|)` off-surface penalty used by SIREN.
    /// Off by default; only for baseline comparisons.
    pub w_siren_off: f64,
    pub curv_mode: CurvMode,
    /// Minimum `|κ1 − κ2|` for a point to take part in direction alignment.
    /// `None` lets the trainer pick the 60th percentile of the dataset;
    /// direct evaluation treats it as 0.
    pub e_region_threshold: Option<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_eikonal: 50.0,
            w_dirichlet_on: 3000.0,
            w_dirichlet_off: 100.0,
            w_neumann: 100.0,
            w_dir_align: 10.0,
            w_curv_match: 0.1,
            w_siren_off: 0.0,
            curv_mode: CurvMode::Mean,
            e_region_threshold: None,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        LossWeights {
            w_eikonal: 0.0,
            w_dirichlet_on: 0.0,
            w_dirichlet_off: 0.0,
            w_neumann: 0.0,
            w_dir_align: 0.0,
            w_curv_match: 0.0,
            w_siren_off: 0.0,
            curv_mode: CurvMode::Off,
            e_region_threshold: None,
        }
    }

    fn weights(&self) -> [f64; N_TERMS] {
        [
            self.w_eikonal,
            self.w_dirichlet_on,
            self.w_dirichlet_off,
            self.w_neumann,
            self.w_dir_align,
            self.w_curv_match,
            self.w_siren_off,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in TERM_NAMES.iter().zip(self.weights()) {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("loss weight for {name} must be finite and >= 0, got {w}")));
            }
        }
        if let Some(t) = self.e_region_threshold {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Config(format!("e_region_threshold must be finite and >= 0, got {t}")));
            }
        }
        Ok(())
    }

    fn curvature_active(&self) -> bool {
        self.w_curv_match > 0.0 && self.curv_mode != CurvMode::Off
    }

    /// Lowest jet order that feeds every term with a positive weight.
    pub fn required_order(&self) -> JetOrder {
        if self.w_dir_align > 0.0 || self.curvature_active() {
            JetOrder::Hessian
        } else if self.w_eikonal > 0.0 || self.w_neumann > 0.0 {
            JetOrder::Gradient
        } else {
            JetOrder::Value
        }
    }
}

const N_TERMS: usize = 7;
const EIK: usize = 0;
const DON: usize = 1;
const DOFF: usize = 2;
const NEU: usize = 3;
const DIR: usize = 4;
const CURV: usize = 5;
const SIREN: usize = 6;
const TERM_NAMES: [&str; N_TERMS] = [
    "eikonal",
    "dirichlet_on",
    "dirichlet_off",
    "neumann",
    "dir_align",
    "curv_match",
    "siren_off",
];

/// Per-term means and the weighted total. A term is `None` when the jet
/// order of the evaluation did not provide what it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub eikonal: Option<f64>,
    pub dirichlet_on: Option<f64>,
    pub dirichlet_off: Option<f64>,
    pub neumann: Option<f64>,
    pub dir_align: Option<f64>,
    pub curv_match: Option<f64>,
    pub siren_off: Option<f64>,
    pub total: f64,
    /// On-surface points skipped by the normal term (vanishing gradient).
    pub neumann_skipped: usize,
    /// Points that took part in direction alignment.
    pub dir_align_eligible: usize,
    /// On-surface points skipped by curvature matching.
    pub curv_skipped: usize,
}

impl LossBreakdown {
    pub fn terms(&self) -> [Option<f64>; N_TERMS] {
        [
            self.eikonal,
            self.dirichlet_on,
            self.dirichlet_off,
            self.neumann,
            self.dir_align,
            self.curv_match,
            self.siren_off,
        ]
    }

    pub fn term_names() -> [&'static str; N_TERMS] {
        TERM_NAMES
    }

    /// `Σ w_t · term_t` over evaluated terms.
    pub fn weighted_total(&self, weights: &LossWeights) -> f64 {
        self.terms()
            .iter()
            .zip(weights.weights())
            .map(|(t, w)| t.map_or(0.0, |t| w * t))
            .sum()
    }

    /// First non-finite entry, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        for (name, t) in TERM_NAMES.iter().zip(self.terms()) {
            if t.is_some_and(|t| !t.is_finite()) {
                return Some(name);
            }
        }
        (!self.total.is_finite()).then_some("total")
    }

    pub fn csv_header() -> String {
        format!("epoch,{},total", TERM_NAMES.join(","))
    }

    /// Unevaluated terms are written as empty fields.
    pub fn csv_row(&self, epoch: usize) -> String {
        let mut row = epoch.to_string();
        for t in self.terms() {
            row.push(',');
            if let Some(t) = t {
                row.push_str(&t.to_string());
            }
        }
        row.push_str(&format!(",{}", self.total));
        row
    }
}

/// Sum with a fixed binary tree shape, so the result only depends on the
/// input order and not on how work is split.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

// --- per-point contributions -----------------------------------------------

struct Inputs<T> {
    v: T,
    g: [T; 3],
    h: [T; 6],
}

fn vec3<T: Real>(v: &Vector3<f64>) -> [T; 3] {
    [T::cst(v.x), T::cst(v.y), T::cst(v.z)]
}

fn eikonal_point<T: Real>(g: &[T; 3]) -> T {
    (T::cst(1.0) - norm3(g)).abs()
}

fn neumann_point<T: Real>(g: &[T; 3], normal: &Vector3<f64>) -> Option<T> {
    let gn = norm3(g);
    if !(gn.val() > GRADIENT_EPS) {
        return None;
    }
    Some(T::cst(1.0) - dot3(g, &vec3(normal)) / gn)
}

fn direction_point<T: Real>(g: &[T; 3], h: &[T; 6], e1: &Vector3<f64>) -> Option<T> {
    let frame = principal_frame(g, h)?;
    if is_umbilic(frame.kappa1.val(), frame.kappa2.val()) {
        return None;
    }
    let c = dot3(&frame.e1, &vec3(e1));
    Some(T::cst(1.0) - c * c)
}

fn curvature_point<T: Real>(
    g: &[T; 3],
    h: &[T; 6],
    kappa1: f64,
    kappa2: f64,
    mode: CurvMode,
) -> Option<T> {
    match mode {
        CurvMode::Off => None,
        CurvMode::Mean => {
            if !(norm3(g).val() > GRADIENT_EPS) {
                return None;
            }
            let h_theta = mean_curvature_generic(g, h);
            Some((h_theta - T::cst(0.5 * (kappa1 + kappa2))).abs())
        }
        CurvMode::Principal => {
            let f = principal_frame(g, h)?;
            Some((f.kappa1 - T::cst(kappa1)).abs() + (f.kappa2 - T::cst(kappa2)).abs())
        }
    }
}

fn on_point<T: Real>(
    x: &Inputs<T>,
    s: &OnSurfaceSample,
    order: JetOrder,
    mode: CurvMode,
    tau: f64,
) -> [Option<T>; N_TERMS] {
    let mut out = [None; N_TERMS];
    out[DON] = Some(x.v.abs());
    if order >= JetOrder::Gradient {
        out[EIK] = Some(eikonal_point(&x.g));
        out[NEU] = neumann_point(&x.g, &s.normal);
    }
    if order >= JetOrder::Hessian {
        // ground-truth umbilics have no preferred direction
        if s.anisotropy >= tau && !is_umbilic(s.kappa1, s.kappa2) {
            out[DIR] = direction_point(&x.g, &x.h, &s.e1);
        }
        out[CURV] = curvature_point(&x.g, &x.h, s.kappa1, s.kappa2, mode);
    }
    out
}

fn off_point<T: Real>(x: &Inputs<T>, sdf: f64, order: JetOrder) -> [Option<T>; N_TERMS] {
    let mut out = [None; N_TERMS];
    out[DOFF] = Some((x.v - T::cst(sdf)).abs());
    out[SIREN] = Some((x.v.abs().scale(-100.0)).exp());
    if order >= JetOrder::Gradient {
        out[EIK] = Some(eikonal_point(&x.g));
    }
    out
}

fn f64_inputs(ch: &[f64; 10]) -> Inputs<f64> {
    Inputs {
        v: ch[0],
        g: [ch[1], ch[2], ch[3]],
        h: [ch[4], ch[5], ch[6], ch[7], ch[8], ch[9]],
    }
}

fn dual_inputs(ch: &[f64; 10]) -> Inputs<Dual<10>> {
    let d = |i: usize| Dual::var(ch[i], i);
    Inputs {
        v: d(0),
        g: [d(1), d(2), d(3)],
        h: [d(4), d(5), d(6), d(7), d(8), d(9)],
    }
}

/// Shared evaluation on per-point jet channels (on-surface points first).
/// Returns the breakdown and, if requested, the adjoint of the total with
/// respect to every channel of every point.
fn evaluate_channels(
    channels: &[[f64; 10]],
    order: JetOrder,
    batch: &Minibatch,
    weights: &LossWeights,
    want_adjoint: bool,
) -> Result<(LossBreakdown, Option<Vec<[f64; 10]>>)> {
    weights.validate()?;
    let n_on = batch.on_surface.len();
    assert_eq!(channels.len(), batch.len(), "channel count does not match batch");
    let tau = weights.e_region_threshold.unwrap_or(0.0);
    let mode = weights.curv_mode;

    let mut values: [Vec<f64>; N_TERMS] = Default::default();
    // derivative rows per term, kept alongside point indices
    let mut derivs: Vec<(usize, usize, [f64; 10])> = Vec::new();
    for (i, ch) in channels.iter().enumerate() {
        if want_adjoint {
            let x = dual_inputs(ch);
            let terms = if i < n_on {
                on_point(&x, &batch.on_surface[i], order, mode, tau)
            } else {
                off_point(&x, batch.off_surface[i - n_on].sdf, order)
            };
            for (t, v) in terms.iter().enumerate() {
                if let Some(v) = v {
                    values[t].push(v.v);
                    derivs.push((i, t, v.d));
                }
            }
        } else {
            let x = f64_inputs(ch);
            let terms = if i < n_on {
                on_point(&x, &batch.on_surface[i], order, mode, tau)
            } else {
                off_point(&x, batch.off_surface[i - n_on].sdf, order)
            };
            for (t, v) in terms.iter().enumerate() {
                if let Some(v) = v {
                    values[t].push(*v);
                }
            }
        }
    }

    let available = [
        order >= JetOrder::Gradient,
        true,
        true,
        order >= JetOrder::Gradient,
        order >= JetOrder::Hessian,
        order >= JetOrder::Hessian && mode != CurvMode::Off,
        true,
    ];
    let w = weights.weights();
    let mut means = [None; N_TERMS];
    for t in 0..N_TERMS {
        if available[t] {
            let n = values[t].len();
            means[t] = Some(if n == 0 { 0.0 } else { pairwise_sum(&values[t]) / n as f64 });
        }
    }
    let neumann_count = values[NEU].len();
    if available[NEU] && w[NEU] > 0.0 && n_on > 0 && neumann_count == 0 {
        return Err(Error::AllPointsDegenerate);
    }

    let mut breakdown = LossBreakdown {
        eikonal: means[EIK],
        dirichlet_on: means[DON],
        dirichlet_off: means[DOFF],
        neumann: means[NEU],
        dir_align: means[DIR],
        curv_match: means[CURV],
        siren_off: means[SIREN],
        total: 0.0,
        neumann_skipped: if available[NEU] { n_on - neumann_count } else { 0 },
        dir_align_eligible: values[DIR].len(),
        curv_skipped: if available[CURV] { n_on - values[CURV].len() } else { 0 },
    };
    breakdown.total = breakdown.weighted_total(weights);

    let adjoint = want_adjoint.then(|| {
        let mut adj = vec![[0.0; 10]; channels.len()];
        for (i, t, d) in derivs {
            let scale = w[t] / values[t].len() as f64;
            if scale != 0.0 {
                for k in 0..10 {
                    adj[i][k] += scale * d[k];
                }
            }
        }
        adj
    });
    Ok((breakdown, adjoint))
}

fn probe_channels(p: &ImplicitProbe) -> [f64; 10] {
    let h = p.hessian_upper();
    [
        p.value, p.gradient.x, p.gradient.y, p.gradient.z, h[0], h[1], h[2], h[3], h[4], h[5],
    ]
}

/// Loss of the network on a batch, optionally with its parameter gradient.
/// Jets are computed only up to the order required by the positive weights.
pub fn evaluate_network(
    net: &SineMlp,
    batch: &Minibatch,
    weights: &LossWeights,
    want_gradient: bool,
) -> Result<(LossBreakdown, Option<ParamTangent>)> {
    let order = weights.required_order();
    // off-surface terms never look past the gradient
    let order_off = order.min(JetOrder::Gradient);
    let on: Vec<_> = batch.on_surface.iter().map(|s| s.point).collect();
    let off: Vec<_> = batch.off_surface.iter().map(|s| s.point).collect();
    let run = |pts: &[nalgebra::Point3<f64>], o: JetOrder| {
        if want_gradient && !pts.is_empty() {
            let (j, t) = net.jets_with_tape(pts, o);
            (j, Some(t))
        } else {
            (net.jets(pts, o), None)
        }
    };
    let (jets_on, tape_on) = run(&on, order);
    let (jets_off, tape_off) = run(&off, order_off);
    let mut channels: Vec<[f64; 10]> = Vec::with_capacity(batch.len());
    for (jets, o) in [(&jets_on, order), (&jets_off, order_off)] {
        let c = o.channels();
        for i in 0..jets.len() {
            let mut ch = [0.0; 10];
            ch[..c].copy_from_slice(jets.channels(i));
            channels.push(ch);
        }
    }
    let (breakdown, adjoint) = evaluate_channels(&channels, order, batch, weights, want_gradient)?;
    let grad = adjoint.map(|adj| {
        let mut total = ParamTangent::zeros(net.dims());
        let parts = [(tape_on, order, &adj[..on.len()]), (tape_off, order_off, &adj[on.len()..])];
        for (tape, o, rows) in parts {
            if let Some(tape) = tape {
                let c = o.channels();
                let flat: Vec<f64> = rows.iter().flat_map(|a| a[..c].iter().copied()).collect();
                let g = net.backward(&tape, &flat);
                for (t, x) in total.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *t += x;
                }
            }
        }
        total
    });
    Ok((breakdown, grad))
}

/// Loss of an arbitrary implicit function; every term is evaluated.
pub fn evaluate_function(
    f: &dyn ImplicitFunction,
    batch: &Minibatch,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let channels: Vec<[f64; 10]> = batch.points().iter().map(|p| probe_channels(&f.probe(p))).collect();
    Ok(evaluate_channels(&channels, JetOrder::Hessian, batch, weights, false)?.0)
}

// --- individual terms on probes --------------------------------------------

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// Mean of `|1 − ‖∇f‖|`.
pub fn eikonal_term(probes: &[ImplicitProbe]) -> f64 {
    let v: Vec<f64> = probes.iter().map(|p| eikonal_point(&p.gradient_array())).collect();
    mean(&v)
}

/// `(mean |f| on surface, mean |f − d| off surface)`.
pub fn dirichlet_term(on: &[ImplicitProbe], off: &[ImplicitProbe], off_sdf: &[f64]) -> (f64, f64) {
    assert_eq!(off.len(), off_sdf.len());
    let a: Vec<f64> = on.iter().map(|p| p.value.abs()).collect();
    let b: Vec<f64> = off.iter().zip(off_sdf).map(|(p, d)| (p.value - d).abs()).collect();
    (mean(&a), mean(&b))
}

/// Mean of `1 − ⟨∇f/‖∇f‖, N⟩`; points with vanishing gradient are skipped.
pub fn neumann_term(probes: &[ImplicitProbe], normals: &[Vector3<f64>]) -> Result<f64> {
    assert_eq!(probes.len(), normals.len());
    let v: Vec<f64> = probes
        .iter()
        .zip(normals)
        .filter_map(|(p, n)| neumann_point(&p.gradient_array(), n))
        .collect();
    if v.is_empty() && !probes.is_empty() {
        return Err(Error::AllPointsDegenerate);
    }
    Ok(mean(&v))
}

/// Mean of `1 − ⟨e1, e1_θ⟩²` over points with `|κ1 − κ2| ≥ tau`, together
/// with the number of points that took part. No eligible point gives 0.
pub fn direction_alignment_term(
    probes: &[ImplicitProbe],
    e1: &[Vector3<f64>],
    anisotropy: &[f64],
    tau: f64,
) -> (f64, usize) {
    let v: Vec<f64> = probes
        .iter()
        .zip(e1)
        .zip(anisotropy)
        .filter(|(_, &a)| a >= tau)
        .filter_map(|((p, e), _)| direction_point(&p.gradient_array(), &p.hessian_upper(), e))
        .collect();
    (mean(&v), v.len())
}

/// Curvature matching against ground truth, with the number of skipped
/// (singular) points.
pub fn curvature_match_term(
    probes: &[ImplicitProbe],
    kappa1: &[f64],
    kappa2: &[f64],
    mode: CurvMode,
) -> (f64, usize) {
    let v: Vec<f64> = probes
        .iter()
        .zip(kappa1.iter().zip(kappa2))
        .filter_map(|(p, (&k1, &k2))| {
            curvature_point(&p.gradient_array(), &p.hessian_upper(), k1, k2, mode)
        })
        .collect();
    (mean(&v), probes.len() - v.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit_geom::{AnalyticSurface, FnImplicit};
    use crate::sampler::OffSurfaceSample;
    use nalgebra::{Matrix3, Point3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn probe(value: f64, gradient: Vector3<f64>) -> ImplicitProbe {
        ImplicitProbe {
            value,
            gradient,
            hessian: Matrix3::zeros(),
        }
    }

    fn sphere_batch(s: &AnalyticSurface, n: usize, seed: u64) -> Minibatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let on_surface = (0..n)
            .map(|i| OnSurfaceSample::from_surface(i, &s.sample_surface(&mut rng)))
            .collect();
        let domain = crate::sampler::Domain::default();
        let off_surface = (0..n)
            .map(|_| {
                let point = domain.sample(&mut rng);
                OffSurfaceSample {
                    point,
                    sdf: s.sdf(&point),
                }
            })
            .collect();
        Minibatch {
            on_surface,
            off_surface,
            oversubscribed: false,
        }
    }

    #[test]
    fn eikonal_examples() {
        let s = AnalyticSurface::Sphere { radius: 0.5 };
        let probes: Vec<_> = [0.1, 0.7, 1.3]
            .iter()
            .map(|&x| s.exact_probe(&Point3::new(x, 0.2, -0.1)))
            .collect();
        assert!(eikonal_term(&probes) < 1e-15);
        assert_eq!(eikonal_term(&[probe(0.0, Vector3::new(0.0, 0.0, 2.0))]), 1.0);
        // f = x², gradient (2x, 0, 0)
        let a = probe(1.0, Vector3::new(2.0, 0.0, 0.0));
        let b = probe(0.25, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(eikonal_term(&[a]), 1.0);
        assert_eq!(eikonal_term(&[b]), 0.0);
        assert_eq!(eikonal_term(&[a, b]), 0.5);
    }

    #[test]
    fn dirichlet_examples() {
        let on = [probe(0.1, Vector3::x()), probe(-0.3, Vector3::x())];
        let off = [probe(0.5, Vector3::x())];
        let (a, b) = dirichlet_term(&on, &off, &[0.2]);
        assert!((a - 0.2).abs() < 1e-15);
        assert!((b - 0.3).abs() < 1e-15);
        let shifted = [probe(0.1, Vector3::x())];
        let (a, b) = dirichlet_term(&shifted, &[probe(0.6, Vector3::x())], &[0.5]);
        assert!((a - 0.1).abs() < 1e-15 && (b - 0.1).abs() < 1e-15);
    }

    #[test]
    fn neumann_examples() {
        let n = [Vector3::z()];
        assert_eq!(neumann_term(&[probe(0.0, Vector3::new(0.0, 0.0, 3.0))], &n).unwrap(), 0.0);
        assert_eq!(neumann_term(&[probe(0.0, -Vector3::z())], &n).unwrap(), 2.0);
        assert_eq!(neumann_term(&[probe(0.0, Vector3::x())], &n).unwrap(), 1.0);
        assert!(matches!(
            neumann_term(&[probe(0.0, Vector3::zeros())], &n),
            Err(Error::AllPointsDegenerate)
        ));
    }

    /// Quadratic `f = z + (a x² + b y²)/2` has curvatures `a`, `b` at the
    /// origin with principal directions x and y.
    fn quadric(a: f64, b: f64) -> ImplicitProbe {
        ImplicitProbe {
            value: 0.0,
            gradient: Vector3::z(),
            hessian: Matrix3::from_diagonal(&Vector3::new(a, b, 0.0)),
        }
    }

    #[test]
    fn direction_alignment_examples() {
        let p = [quadric(2.0, 0.5)];
        assert!(direction_alignment_term(&p, &[Vector3::x()], &[1.5], 0.1).0.abs() < 1e-15);
        assert!(direction_alignment_term(&p, &[-Vector3::x()], &[1.5], 0.1).0.abs() < 1e-15);
        assert!((direction_alignment_term(&p, &[Vector3::y()], &[1.5], 0.1).0 - 1.0).abs() < 1e-15);
        assert_eq!(direction_alignment_term(&p, &[Vector3::y()], &[1.5], 2.0), (0.0, 0));
        // umbilic network points are excluded
        assert_eq!(direction_alignment_term(&[quadric(1.0, 1.0)], &[Vector3::x()], &[1.5], 0.1).1, 0);
    }

    #[test]
    fn curvature_match_examples() {
        let r = 0.5;
        let big = AnalyticSurface::Sphere { radius: 2.0 * r };
        let p = [big.exact_probe(&Point3::new(0.0, 2.0 * r, 0.0))];
        let k = [1.0 / r];
        let (principal, _) = curvature_match_term(&p, &k, &k, CurvMode::Principal);
        assert!((principal - 1.0 / r).abs() < 1e-12);
        let (mean_mode, _) = curvature_match_term(&p, &k, &k, CurvMode::Mean);
        assert!((mean_mode - 0.5 / r).abs() < 1e-12);
    }

    #[test]
    fn mean_mode_bounded_by_half_principal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        for _ in 0..200 {
            let v: [f64; 9] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
            let p = ImplicitProbe {
                value: 0.0,
                gradient: Vector3::new(v[0], v[1], v[2] + 3.0),
                hessian: Matrix3::new(v[3], v[4], v[5], v[4], v[6], v[7], v[5], v[7], v[8]),
            };
            let (k1, k2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (k1, k2) = (f64::max(k1, k2), f64::min(k1, k2));
            let (m, _) = curvature_match_term(&[p], &[k1], &[k2], CurvMode::Mean);
            let (pr, _) = curvature_match_term(&[p], &[k1], &[k2], CurvMode::Principal);
            assert!(m <= 0.5 * pr + 1e-12);
        }
    }

    #[test]
    fn exact_sdf_has_zero_loss() {
        for s in [
            AnalyticSurface::Sphere { radius: 0.6 },
            AnalyticSurface::Torus {
                major: 0.6,
                minor: 0.25,
            },
        ] {
            let batch = sphere_batch(&s, 200, 1);
            for mode in [CurvMode::Mean, CurvMode::Principal] {
                let w = LossWeights {
                    curv_mode: mode,
                    ..Default::default()
                };
                let b = evaluate_function(&s, &batch, &w).unwrap();
                for (name, t) in TERM_NAMES.iter().zip(b.terms()) {
                    if *name != "siren_off" {
                        assert!(t.unwrap() < 1e-9, "{name} = {t:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_weights_zero_total() {
        let s = AnalyticSurface::Sphere { radius: 0.6 };
        let batch = sphere_batch(&s, 20, 2);
        let f = FnImplicit(|p: &Point3<f64>| p.x + 0.3);
        let b = evaluate_function(&f, &batch, &LossWeights::zero()).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn hand_built_two_point_batch() {
        // f = z − 0.1: value −0.1 at the on point, gradient (0,0,1)
        let f = FnImplicit(|p: &Point3<f64>| p.z - 0.1);
        let batch = Minibatch {
            on_surface: vec![OnSurfaceSample {
                point: Point3::origin(),
                normal: Vector3::x(),
                kappa1: 1.0,
                kappa2: 1.0,
                e1: Vector3::y(),
                e2: Vector3::z(),
                anisotropy: 0.0,
                index: 0,
            }],
            off_surface: vec![OffSurfaceSample {
                point: Point3::new(0.0, 0.0, 0.5),
                sdf: 0.3,
            }],
            oversubscribed: false,
        };
        let w = LossWeights {
            w_eikonal: 1.0,
            w_dirichlet_on: 1.0,
            w_dirichlet_off: 1.0,
            w_neumann: 1.0,
            w_dir_align: 1.0,
            w_curv_match: 1.0,
            w_siren_off: 0.0,
            curv_mode: CurvMode::Mean,
            e_region_threshold: Some(0.5),
        };
        let b = evaluate_function(&f, &batch, &w).unwrap();
        // eikonal 0, dirichlet 0.1 + 0.1, neumann 1, no eligible direction
        // point, curvature |0 − 1| = 1
        assert!((b.total - 2.2).abs() < 1e-7, "{b:?}");
        assert_eq!(b.dir_align_eligible, 0);
        assert!((b.total - b.weighted_total(&w)).abs() == 0.0);
    }

    #[test]
    fn enabling_terms_keeps_others() {
        let s = AnalyticSurface::Sphere { radius: 0.6 };
        let batch = sphere_batch(&s, 50, 3);
        let f = FnImplicit(|p: &Point3<f64>| p.coords.norm() * 1.1 - 0.6 + 0.01 * p.x * p.y);
        let mut w = LossWeights::zero();
        w.w_dirichlet_on = 1.0;
        let a = evaluate_function(&f, &batch, &w).unwrap();
        w.w_neumann = 1.0;
        w.w_curv_match = 1.0;
        w.curv_mode = CurvMode::Principal;
        let b = evaluate_function(&f, &batch, &w).unwrap();
        assert_eq!(a.dirichlet_on, b.dirichlet_on);
        assert_eq!(a.eikonal, b.eikonal);
    }

    #[test]
    fn csv_row_layout() {
        let b = LossBreakdown {
            dirichlet_on: Some(0.5),
            total: 1.5,
            ..Default::default()
        };
        assert_eq!(
            LossBreakdown::csv_header(),
            "epoch,eikonal,dirichlet_on,dirichlet_off,neumann,dir_align,curv_match,siren_off,total"
        );
        assert_eq!(b.csv_row(3), "3,,0.5,,,,,,1.5");
    }
}
