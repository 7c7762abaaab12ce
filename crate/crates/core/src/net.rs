//! Sinusoidal MLP `f(p) = W_n(φ_{n-1} ∘ … ∘ φ_0)(p) + b_n` with
//! `φ_i(x) = sin(ω0 (W_i x + b_i))`, together with closed-form input
//! derivatives up to second order and reverse-mode parameter gradients of
//! losses built from those derivatives.
//!
//! Derivatives are propagated layer by layer as jets: every neuron carries
//! its value, its three first partials and the six unique second partials
//! with respect to the input point. For a layer `y = sin(z)`:
//!
//! ```text
//! y_j  = cos(z) z_j
//! y_jk = cos(z) z_jk − sin(z) z_j z_k
//! ```
//!
//! Batches are laid out column-wise (`point * channels + channel`) so each
//! affine map is a single matrix product.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::implicit_geom::{ImplicitFunction, ImplicitProbe};
use crate::loss::{self, LossBreakdown, LossWeights};
use crate::sampler::Minibatch;

pub const DEFAULT_OMEGA0: f64 = 30.0;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Pairs `(j, k)`, `j ≤ k`, in the order second-derivative channels are stored.
pub const HESSIAN_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// How many input derivatives to propagate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value,
    Gradient,
    Hessian,
}

impl JetOrder {
    pub fn channels(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Gradient => 4,
            JetOrder::Hessian => 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SineMlp {
    dims: Vec<usize>,
    omega0: f64,
    params: Vec<f64>,
}

/// Gradient of a scalar with respect to every network parameter, laid out
/// like [`SineMlp::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTangent {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl ParamTangent {
    pub fn zeros(dims: &[usize]) -> Self {
        ParamTangent {
            dims: dims.to_vec(),
            values: vec![0.0; param_count(dims)],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn matches(&self, net: &SineMlp) -> bool {
        self.dims == net.dims
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

pub(crate) fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "layer dims {dims:?} need at least an input and an output size"
        )));
    }
    if dims[0] != 3 || *dims.last().unwrap() != 1 {
        return Err(Error::Config(format!(
            "layer dims {dims:?} must start with 3 and end with 1"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Config(format!("layer dims {dims:?} contain a zero width")));
    }
    Ok(())
}

impl SineMlp {
    /// Builds a network from explicit parameters (layer-major; each layer
    /// stores its weight matrix row-major followed by its bias).
    pub fn from_params(dims: Vec<usize>, omega0: f64, params: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::Config(format!("omega0 must be positive, got {omega0}")));
        }
        let expected = param_count(&dims);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("network parameters must be finite".into()));
        }
        Ok(SineMlp { dims, omega0, params })
    }

    /// Initialization of Sitzmann et al.: first-layer weights uniform in
    /// `±1/3`, later weights uniform in `±sqrt(6/fan_in)/ω0`, biases uniform
    /// in `±1/sqrt(fan_in)`.
    pub fn init_siren(dims: &[usize], omega0: f64, seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::Config(format!("omega0 must be positive, got {omega0}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(dims));
        for (layer, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = if layer == 0 {
                1.0 / n_in as f64
            } else {
                (6.0 / n_in as f64).sqrt() / omega0
            };
            for _ in 0..n_in * n_out {
                params.push(rng.random_range(-bound..=bound));
            }
            let bias_bound = 1.0 / (n_in as f64).sqrt();
            for _ in 0..n_out {
                params.push(rng.random_range(-bias_bound..=bias_bound));
            }
        }
        Ok(SineMlp {
            dims: dims.to_vec(),
            omega0,
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// `(weights, bias)` of layer `i`; weights are `dims[i+1] × dims[i]`, row-major.
    pub fn layer(&self, i: usize) -> (&[f64], &[f64]) {
        let mut off = 0;
        for w in self.dims.windows(2).take(i) {
            off += w[0] * w[1] + w[1];
        }
        let (n_in, n_out) = (self.dims[i], self.dims[i + 1]);
        let weights = &self.params[off..off + n_in * n_out];
        let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (weights, bias)
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.num_layers());
        let mut off = 0;
        for w in self.dims.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        offs
    }

    pub fn forward(&self, p: &Point3<f64>) -> f64 {
        self.jets(std::slice::from_ref(p), JetOrder::Value).value(0)
    }

    pub fn input_gradient(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.jets(std::slice::from_ref(p), JetOrder::Gradient).gradient(0)
    }

    pub fn input_hessian(&self, p: &Point3<f64>) -> Matrix3<f64> {
        self.jets(std::slice::from_ref(p), JetOrder::Hessian).hessian(0)
    }

    /// Value, gradient and Hessian at `p` in one pass.
    pub fn probe_at(&self, p: &Point3<f64>) -> ImplicitProbe {
        self.jets(std::slice::from_ref(p), JetOrder::Hessian).probe(0)
    }

    /// Evaluates jets of the requested order at every point.
    pub fn jets(&self, points: &[Point3<f64>], order: JetOrder) -> Jets {
        self.run_forward(points, order, false).0
    }

    /// Like [`jets`](Self::jets) but keeps the intermediates needed by
    /// [`backward`](Self::backward).
    pub fn jets_with_tape(&self, points: &[Point3<f64>], order: JetOrder) -> (Jets, JetTape) {
        let (jets, tape) = self.run_forward(points, order, true);
        (jets, tape.expect("tape requested"))
    }

    fn run_forward(
        &self,
        points: &[Point3<f64>],
        order: JetOrder,
        keep: bool,
    ) -> (Jets, Option<JetTape>) {
        let c = order.channels();
        let np = points.len();
        let cols = np * c;
        let mut x = vec![0.0; 3 * cols];
        for (i, p) in points.iter().enumerate() {
            for r in 0..3 {
                x[r * cols + i * c] = p[r];
                if c > 1 {
                    x[r * cols + i * c + 1 + r] = 1.0;
                }
            }
        }

        let n_layers = self.num_layers();
        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        for l in 0..n_layers - 1 {
            let (w, b) = self.layer(l);
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let mut a = vec![0.0; n_out * cols];
            gemm(n_out, n_in, cols, self.omega0, w, n_in, 1, &x, cols, 1, 0.0, &mut a, cols, 1);
            for r in 0..n_out {
                let shift = self.omega0 * b[r];
                let row = &mut a[r * cols..(r + 1) * cols];
                for i in 0..np {
                    row[i * c] += shift;
                }
            }
            let y = sine_forward(&a, c);
            let prev = std::mem::replace(&mut x, y);
            if keep {
                inputs.push(prev);
                pre.push(a);
            }
        }

        let (w, b) = self.layer(n_layers - 1);
        let n_in = self.dims[n_layers - 1];
        let mut out = vec![0.0; cols];
        gemm(1, n_in, cols, 1.0, w, n_in, 1, &x, cols, 1, 0.0, &mut out, cols, 1);
        for i in 0..np {
            out[i * c] += b[0];
        }
        if keep {
            inputs.push(x);
        }
        let jets = Jets { order, data: out };
        let tape = keep.then_some(JetTape {
            order,
            n_points: np,
            inputs,
            pre,
        });
        (jets, tape)
    }

    /// Reverse pass: given the adjoint of every output jet channel
    /// (same layout as [`Jets`]), returns the parameter gradient.
    pub fn backward(&self, tape: &JetTape, adjoint: &[f64]) -> ParamTangent {
        let c = tape.order.channels();
        let cols = tape.n_points * c;
        assert_eq!(adjoint.len(), cols, "adjoint layout does not match tape");
        let n_layers = self.num_layers();
        let offs = self.layer_offsets();
        let mut grad = ParamTangent::zeros(&self.dims);
        let g = &mut grad.values;

        // output layer
        let l = n_layers - 1;
        let n_in = self.dims[l];
        let x = &tape.inputs[l];
        {
            let (gw, rest) = g[offs[l]..].split_at_mut(n_in);
            gemm(1, cols, n_in, 1.0, adjoint, cols, 1, x, 1, cols, 0.0, gw, n_in, 1);
            rest[0] = (0..tape.n_points).map(|i| adjoint[i * c]).sum();
        }
        if n_layers == 1 {
            return grad;
        }
        let (w, _) = self.layer(l);
        let mut ybar = vec![0.0; n_in * cols];
        gemm(n_in, 1, cols, 1.0, w, 1, n_in, adjoint, cols, 1, 0.0, &mut ybar, cols, 1);

        for l in (0..n_layers - 1).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let abar = sine_backward(&tape.pre[l], &ybar, c);
            let x = &tape.inputs[l];
            let (gw, rest) = g[offs[l]..].split_at_mut(n_in * n_out);
            gemm(n_out, cols, n_in, self.omega0, &abar, cols, 1, x, 1, cols, 0.0, gw, n_in, 1);
            for r in 0..n_out {
                let row = &abar[r * cols..(r + 1) * cols];
                rest[r] = self.omega0 * (0..tape.n_points).map(|i| row[i * c]).sum::<f64>();
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut xbar = vec![0.0; n_in * cols];
                gemm(n_in, n_out, cols, self.omega0, w, 1, n_in, &abar, cols, 1, 0.0, &mut xbar, cols, 1);
                ybar = xbar;
            }
        }
        grad
    }

    /// Weighted training loss on a minibatch and its gradient with respect
    /// to every parameter.
    pub fn loss_param_gradient(
        &self,
        batch: &Minibatch,
        weights: &LossWeights,
    ) -> Result<(LossBreakdown, ParamTangent)> {
        let (breakdown, grad) = loss::evaluate_network(self, batch, weights, true)?;
        Ok((breakdown, grad.expect("gradient requested")))
    }

    /// Applies `θ ← θ + step`.
    pub fn apply_update(&mut self, step: &[f64]) {
        assert_eq!(step.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(step) {
            *p += s;
        }
    }
}

impl ImplicitFunction for SineMlp {
    fn value(&self, p: &Point3<f64>) -> f64 {
        self.forward(p)
    }

    fn probe(&self, p: &Point3<f64>) -> ImplicitProbe {
        self.probe_at(p)
    }

    fn gradient(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.input_gradient(p)
    }

    fn values(&self, points: &[Point3<f64>]) -> Vec<f64> {
        let jets = self.jets(points, JetOrder::Value);
        jets.data
    }

    fn gradients(&self, points: &[Point3<f64>]) -> Vec<Vector3<f64>> {
        let jets = self.jets(points, JetOrder::Gradient);
        (0..points.len()).map(|i| jets.gradient(i)).collect()
    }

    fn probes(&self, points: &[Point3<f64>]) -> Vec<ImplicitProbe> {
        let jets = self.jets(points, JetOrder::Hessian);
        (0..points.len()).map(|i| jets.probe(i)).collect()
    }
}

fn sine_forward(a: &[f64], c: usize) -> Vec<f64> {
    let mut y = vec![0.0; a.len()];
    match c {
        1 => {
            for (yi, ai) in y.iter_mut().zip(a) {
                *yi = ai.sin();
            }
        }
        4 => {
            for (yb, ab) in y.chunks_exact_mut(4).zip(a.chunks_exact(4)) {
                let (s, co) = ab[0].sin_cos();
                yb[0] = s;
                yb[1] = co * ab[1];
                yb[2] = co * ab[2];
                yb[3] = co * ab[3];
            }
        }
        _ => {
            for (yb, ab) in y.chunks_exact_mut(10).zip(a.chunks_exact(10)) {
                let (s, co) = ab[0].sin_cos();
                yb[0] = s;
                yb[1] = co * ab[1];
                yb[2] = co * ab[2];
                yb[3] = co * ab[3];
                for (q, &(j, k)) in HESSIAN_PAIRS.iter().enumerate() {
                    yb[4 + q] = co * ab[4 + q] - s * ab[1 + j] * ab[1 + k];
                }
            }
        }
    }
    y
}

fn sine_backward(a: &[f64], ybar: &[f64], c: usize) -> Vec<f64> {
    let mut abar = vec![0.0; a.len()];
    match c {
        1 => {
            for ((gb, ab), yb) in abar.iter_mut().zip(a).zip(ybar) {
                *gb = yb * ab.cos();
            }
        }
        4 => {
            for ((gb, ab), yb) in abar.chunks_exact_mut(4).zip(a.chunks_exact(4)).zip(ybar.chunks_exact(4)) {
                let (s, co) = ab[0].sin_cos();
                gb[0] = co * yb[0] - s * (yb[1] * ab[1] + yb[2] * ab[2] + yb[3] * ab[3]);
                gb[1] = co * yb[1];
                gb[2] = co * yb[2];
                gb[3] = co * yb[3];
            }
        }
        _ => {
            for ((gb, ab), yb) in abar
                .chunks_exact_mut(10)
                .zip(a.chunks_exact(10))
                .zip(ybar.chunks_exact(10))
            {
                let (s, co) = ab[0].sin_cos();
                let zj = [ab[1], ab[2], ab[3]];
                let mut v = co * yb[0] - s * (yb[1] * zj[0] + yb[2] * zj[1] + yb[3] * zj[2]);
                let mut dj = [co * yb[1], co * yb[2], co * yb[3]];
                for (q, &(j, k)) in HESSIAN_PAIRS.iter().enumerate() {
                    let yq = yb[4 + q];
                    v -= yq * (co * zj[j] * zj[k] + s * ab[4 + q]);
                    dj[j] -= yq * s * zj[k];
                    dj[k] -= yq * s * zj[j];
                    gb[4 + q] = co * yq;
                }
                gb[0] = v;
                gb[1..4].copy_from_slice(&dj);
            }
        }
    }
    abar
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(a.len() > last(m, k, rsa, csa));
        assert!(b.len() > last(k, n, rsb, csb));
    }
    assert!(c.len() > last(m, n, rsc, csc));
    // SAFETY: the asserts above keep every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Network outputs for a batch of points: per point, the value followed by
/// the requested derivative channels.
#[derive(Clone, Debug)]
pub struct Jets {
    order: JetOrder,
    data: Vec<f64>,
}

impl Jets {
    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.order.channels()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Raw channels of point `i`.
    pub fn channels(&self, i: usize) -> &[f64] {
        let c = self.order.channels();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.data[i * self.order.channels()]
    }

    pub fn gradient(&self, i: usize) -> Vector3<f64> {
        assert!(self.order >= JetOrder::Gradient);
        let ch = self.channels(i);
        Vector3::new(ch[1], ch[2], ch[3])
    }

    pub fn hessian_upper(&self, i: usize) -> [f64; 6] {
        assert!(self.order >= JetOrder::Hessian);
        let ch = self.channels(i);
        [ch[4], ch[5], ch[6], ch[7], ch[8], ch[9]]
    }

    /// Hessian of point `i`, exactly symmetric.
    pub fn hessian(&self, i: usize) -> Matrix3<f64> {
        let h = self.hessian_upper(i);
        Matrix3::new(h[0], h[1], h[2], h[1], h[3], h[4], h[2], h[4], h[5])
    }

    /// Probe of point `i`; missing derivative channels are zero.
    pub fn probe(&self, i: usize) -> ImplicitProbe {
        let gradient = if self.order >= JetOrder::Gradient {
            self.gradient(i)
        } else {
            Vector3::zeros()
        };
        let hessian = if self.order >= JetOrder::Hessian {
            self.hessian(i)
        } else {
            Matrix3::zeros()
        };
        ImplicitProbe {
            value: self.value(i),
            gradient,
            hessian,
        }
    }
}

/// Intermediates of a forward pass kept for [`SineMlp::backward`].
#[derive(Clone, Debug)]
pub struct JetTape {
    order: JetOrder,
    n_points: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl JetTape {
    pub fn order(&self) -> JetOrder {
        self.order
    }
}

// --- checkpoints -----------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub omega0: f64,
    pub parameters: Vec<f64>,
    #[serde(default)]
    pub metadata: std::collections::BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_net(net: &SineMlp, metadata: std::collections::BTreeMap<String, String>) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_dims: net.dims.clone(),
            omega0: net.omega0,
            parameters: net.params.clone(),
            metadata,
        }
    }

    pub fn into_net(self) -> Result<SineMlp> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_FORMAT_VERSION,
                found: self.format_version,
            });
        }
        validate_dims(&self.layer_dims)?;
        let expected = param_count(&self.layer_dims);
        if self.parameters.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.parameters.len(),
            });
        }
        SineMlp::from_params(self.layer_dims, self.omega0, self.parameters)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)
            .map_err(|e| Error::CorruptCheckpoint(format!("serialization failed: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        // Version is checked before the full schema so that files written
        // by a future format report a version error rather than a parse error.
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        if let Some(v) = raw.get("format_version").and_then(|v| v.as_u64()) {
            if v != CHECKPOINT_FORMAT_VERSION as u64 {
                return Err(Error::VersionMismatch {
                    expected: CHECKPOINT_FORMAT_VERSION,
                    found: v as u32,
                });
            }
        }
        serde_json::from_value(raw).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }
}

pub fn save_checkpoint(net: &SineMlp, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::from_net(net, Default::default()).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SineMlp> {
    Checkpoint::load(path)?.into_net()
}
