//! Reconstruction metrics and sampling comparisons.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::discrete_geom::{vertex_normals, TriMesh};
use crate::error::{Error, Result};
use crate::implicit_geom::{mean_curvature, AnalyticSurface, ImplicitFunction, GRADIENT_EPS};
use crate::net::SineMlp;
use crate::sampler::Domain;
use crate::sdf_oracle::{SdfOracle, DEFAULT_K_SIGN};
use crate::trainer::{Dataset, TrainConfig, Trainer};

/// Ground truth a candidate function is compared against.
pub trait Reference: Sync {
    /// Signed distance at `p` (exact or oracle).
    fn value(&self, p: &Point3<f64>) -> f64;

    /// A surface point and its unit normal.
    fn sample_surface(&self, rng: &mut ChaCha8Rng) -> (Point3<f64>, Vector3<f64>);
}

impl Reference for AnalyticSurface {
    fn value(&self, p: &Point3<f64>) -> f64 {
        self.sdf(p)
    }

    fn sample_surface(&self, rng: &mut ChaCha8Rng) -> (Point3<f64>, Vector3<f64>) {
        let s = AnalyticSurface::sample_surface(self, rng);
        (s.point, s.normal)
    }
}

/// Triangle mesh reference. Values come from the point-cloud oracle over
/// the vertices; surface samples are area-uniform on the triangles with
/// barycentrically blended vertex normals.
pub struct MeshReference {
    mesh: TriMesh,
    normals: Vec<Vector3<f64>>,
    oracle: SdfOracle,
    cumulative_area: Vec<f64>,
}

impl MeshReference {
    pub fn new(mesh: TriMesh) -> Result<Self> {
        mesh.validate()?;
        let normals: Vec<Vector3<f64>> = vertex_normals(&mesh)
            .into_iter()
            .map(|n| n.unwrap_or_else(Vector3::z))
            .collect();
        let oracle = SdfOracle::new(mesh.vertices.clone(), normals.clone(), DEFAULT_K_SIGN)?;
        let mut acc = 0.0;
        let cumulative_area = (0..mesh.faces.len())
            .map(|f| {
                acc += mesh.face_area(f);
                acc
            })
            .collect();
        Ok(MeshReference {
            mesh,
            normals,
            oracle,
            cumulative_area,
        })
    }
}

impl Reference for MeshReference {
    fn value(&self, p: &Point3<f64>) -> f64 {
        self.oracle.signed_distance(p)
    }

    fn sample_surface(&self, rng: &mut ChaCha8Rng) -> (Point3<f64>, Vector3<f64>) {
        let total = *self.cumulative_area.last().unwrap();
        let target = rng.random::<f64>() * total;
        let f = self
            .cumulative_area
            .partition_point(|&a| a < target)
            .min(self.cumulative_area.len() - 1);
        let [a, b, c] = self.mesh.faces[f];
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let w = 1.0 - u - v;
        let vs = &self.mesh.vertices;
        let p = Point3::from(w * vs[a].coords + u * vs[b].coords + v * vs[c].coords);
        let n = w * self.normals[a] + u * self.normals[b] + v * self.normals[c];
        let n = n.try_normalize(1e-12).unwrap_or_else(|| self.mesh.face_normal(f));
        (p, n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub n_surface: usize,
    pub n_domain: usize,
    pub repetitions: usize,
    /// Domain samples with `|f| <` this half-width are rejected.
    pub shell: f64,
    pub domain: Domain,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            n_surface: 2500,
            n_domain: 2500,
            repetitions: 100,
            shell: 0.01,
            domain: Domain::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub domain_mean: f64,
    pub domain_max: f64,
    pub surface_mean: f64,
    pub surface_max: f64,
    /// `1 − ⟨∇f̄/‖∇f̄‖, N⟩`, in `[0, 2]`.
    pub alignment_mean: f64,
    pub alignment_max: f64,
    /// Standard errors of the three means over all pooled samples.
    pub domain_sem: f64,
    pub surface_sem: f64,
    pub alignment_sem: f64,
    /// Surface samples where `‖∇f̄‖` vanished; they count as alignment 1.
    pub singular_gradients: usize,
    pub n_surface: usize,
    pub n_domain: usize,
    pub repetitions: usize,
}

impl MetricReport {
    pub fn csv_header() -> &'static str {
        "method,model,domain_mean,domain_max,surface_mean,surface_max,alignment_mean,alignment_max"
    }

    pub fn csv_row(&self, method: &str, model: &str) -> String {
        format!(
            "{method},{model},{},{},{},{},{},{}",
            self.domain_mean,
            self.domain_max,
            self.surface_mean,
            self.surface_max,
            self.alignment_mean,
            self.alignment_max
        )
    }
}

#[derive(Default)]
struct Accum {
    sum: f64,
    sum_sq: f64,
    max: f64,
    n: usize,
}

impl Accum {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.max = self.max.max(x);
        self.n += 1;
    }

    fn merge(&mut self, o: &Accum) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.max = self.max.max(o.max);
        self.n += o.n;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    fn sem(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Evaluation randomness uses ChaCha streams `1 + rep`; training data is
/// drawn from stream 0, so the samples are disjoint by construction.
fn eval_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + rep as u64);
    rng
}

/// Mean and max of `|f̄ − f|` in the domain and on the surface, and of the
/// normal alignment on the surface, averaged over fresh samples.
pub fn reconstruction_metrics(candidate: &dyn ImplicitFunction, reference: &dyn Reference, opts: &EvalOptions) -> MetricReport {
    let reps: Vec<usize> = (0..opts.repetitions).collect();
    let parts = crate::par_map(&reps, |&rep| {
        let mut rng = eval_rng(opts.seed, rep);
        let mut surf_pts = Vec::with_capacity(opts.n_surface);
        let mut surf_nrm = Vec::with_capacity(opts.n_surface);
        for _ in 0..opts.n_surface {
            let (p, n) = reference.sample_surface(&mut rng);
            surf_pts.push(p);
            surf_nrm.push(n);
        }
        let mut dom_pts = Vec::with_capacity(opts.n_domain);
        let mut dom_ref = Vec::with_capacity(opts.n_domain);
        while dom_pts.len() < opts.n_domain {
            let p = opts.domain.sample(&mut rng);
            let f = reference.value(&p);
            if f.abs() >= opts.shell {
                dom_pts.push(p);
                dom_ref.push(f);
            }
        }
        let mut domain = Accum::default();
        for (v, f) in candidate.values(&dom_pts).into_iter().zip(dom_ref) {
            domain.push((v - f).abs());
        }
        let mut surface = Accum::default();
        for v in candidate.values(&surf_pts) {
            surface.push(v.abs());
        }
        let mut align = Accum::default();
        let mut singular = 0;
        for (g, n) in candidate.gradients(&surf_pts).into_iter().zip(&surf_nrm) {
            let norm = g.norm();
            if norm < GRADIENT_EPS {
                singular += 1;
                align.push(1.0);
            } else {
                align.push(1.0 - g.dot(n) / norm);
            }
        }
        (domain, surface, align, singular)
    });
    let (mut domain, mut surface, mut align, mut singular) = (Accum::default(), Accum::default(), Accum::default(), 0);
    for (d, s, a, k) in &parts {
        domain.merge(d);
        surface.merge(s);
        align.merge(a);
        singular += k;
    }
    MetricReport {
        domain_mean: domain.mean(),
        domain_max: domain.max,
        surface_mean: surface.mean(),
        surface_max: surface.max,
        alignment_mean: align.mean(),
        alignment_max: align.max,
        domain_sem: domain.sem(),
        surface_sem: surface.sem(),
        alignment_sem: align.sem(),
        singular_gradients: singular,
        n_surface: opts.n_surface,
        n_domain: opts.n_domain,
        repetitions: opts.repetitions,
    }
}

/// Mean `|f_θ(p_i)|` over every on-surface point of the dataset.
pub fn dirichlet_metric(net: &SineMlp, data: &Dataset) -> f64 {
    let pts: Vec<Point3<f64>> = data.points.iter().map(|p| p.point).collect();
    let v = net.values(&pts);
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

/// Mean curvature `½ div(∇f/‖∇f‖)` of the level set through each point; NaN
/// where the gradient vanishes.
pub fn level_set_mean_curvature(f: &dyn ImplicitFunction, points: &[Point3<f64>]) -> Vec<f64> {
    f.probes(points)
        .iter()
        .map(|p| mean_curvature(p).unwrap_or(f64::NAN))
        .collect()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // ties share their average rank
        let avg = 0.5 * (i + j) as f64;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation over the pairs where both values are finite.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter(|(p, q)| p.is_finite() && q.is_finite())
        .map(|(p, q)| (*p, *q))
        .unzip();
    let (rx, ry) = (ranks(&x), ranks(&y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (u, v) in rx.iter().zip(&ry) {
        sxy += (u - mx) * (v - my);
        sxx += (u - mx) * (u - mx);
        syy += (v - my) * (v - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Per-seed on-surface Dirichlet metric of two training configurations at
/// the same gradient-step checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbReport {
    pub checkpoints: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `[checkpoint][seed]`.
    pub uniform: Vec<Vec<f64>>,
    pub biased: Vec<Vec<f64>>,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Two-sided exact sign test on paired differences; zeros are dropped.
pub fn sign_test(differences: &[f64]) -> f64 {
    let pos = differences.iter().filter(|d| **d > 0.0).count() as u64;
    let neg = differences.iter().filter(|d| **d < 0.0).count() as u64;
    let n = pos + neg;
    if n == 0 {
        return 1.0;
    }
    let binom = Binomial::new(0.5, n).expect("valid binomial");
    (2.0 * binom.cdf(pos.min(neg))).min(1.0)
}

impl AbReport {
    fn index(&self, checkpoint: usize) -> usize {
        self.checkpoints
            .iter()
            .position(|&c| c == checkpoint)
            .expect("checkpoint was recorded")
    }

    pub fn median_uniform(&self, checkpoint: usize) -> f64 {
        median(&self.uniform[self.index(checkpoint)])
    }

    pub fn median_biased(&self, checkpoint: usize) -> f64 {
        median(&self.biased[self.index(checkpoint)])
    }

    /// `median(biased) − median(uniform)`; negative favours biased sampling.
    pub fn median_difference(&self, checkpoint: usize) -> f64 {
        self.median_biased(checkpoint) - self.median_uniform(checkpoint)
    }

    pub fn differences(&self, checkpoint: usize) -> Vec<f64> {
        let i = self.index(checkpoint);
        self.biased[i].iter().zip(&self.uniform[i]).map(|(b, u)| b - u).collect()
    }

    pub fn sign_test(&self, checkpoint: usize) -> f64 {
        sign_test(&self.differences(checkpoint))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,seed,uniform,biased\n");
        for (i, c) in self.checkpoints.iter().enumerate() {
            for (j, seed) in self.seeds.iter().enumerate() {
                s.push_str(&format!("{c},{seed},{},{}\n", self.uniform[i][j], self.biased[i][j]));
            }
        }
        s
    }
}

fn comparable(a: &TrainConfig, b: &TrainConfig) -> bool {
    let strip = |c: &TrainConfig| {
        let mut c = c.clone();
        c.partition = [0.0; 3];
        c.batch.fractions = [0.0; 3];
        c.batch.m = 0;
        c.batch.seed = 0;
        c.seed = 0;
        c.epochs = 0;
        c
    };
    strip(a) == strip(b)
}

/// Trains both configurations for `budget` gradient steps from the same
/// initialization per seed, recording the Dirichlet metric at every
/// checkpoint (step counts, `≤ budget`).
pub fn sampling_ab_test(
    data: &Dataset,
    uniform: &TrainConfig,
    biased: &TrainConfig,
    seeds: &[u64],
    budget: usize,
    checkpoints: &[usize],
) -> Result<AbReport> {
    if !comparable(uniform, biased) {
        return Err(Error::Config(
            "compared configurations may differ only in sampling fractions and batch size".into(),
        ));
    }
    if checkpoints.iter().any(|&c| c > budget) {
        return Err(Error::Config("checkpoint beyond the step budget".into()));
    }
    let mut checkpoints = checkpoints.to_vec();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let run = |config: &TrainConfig, seed: u64| -> Result<Vec<f64>> {
        let mut cfg = config.clone();
        cfg.seed = seed;
        let net = SineMlp::init_siren(&cfg.layer_dims, cfg.omega0, seed)?;
        let mut trainer = Trainer::new(net, &cfg, data)?;
        let mut out = Vec::with_capacity(checkpoints.len());
        for &c in &checkpoints {
            while trainer.steps_taken() < c {
                trainer.step(data)?;
            }
            out.push(dirichlet_metric(&trainer.net, data));
        }
        Ok(out)
    };
    let mut u = vec![Vec::new(); checkpoints.len()];
    let mut b = vec![Vec::new(); checkpoints.len()];
    for &seed in seeds {
        for (i, x) in run(uniform, seed)?.into_iter().enumerate() {
            u[i].push(x);
        }
        for (i, x) in run(biased, seed)?.into_iter().enumerate() {
            b[i].push(x);
        }
    }
    Ok(AbReport {
        checkpoints,
        seeds: seeds.to_vec(),
        uniform: u,
        biased: b,
    })
}
