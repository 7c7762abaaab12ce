//! Adam training loop.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrete_geom::{vertex_geometry, Normalization, TriMesh};
use crate::error::{Error, Result};
use crate::implicit_geom::{AnalyticSurface, SurfacePoint};
use crate::loss::{LossBreakdown, LossWeights};
use crate::net::{Checkpoint, SineMlp, DEFAULT_OMEGA0};
use crate::sampler::{epoch_plan, feature, BatchSpec, Partition, Sampler};
use crate::sdf_oracle::{DistanceOracle, SdfOracle, DEFAULT_K_SIGN};

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if params.len() != grad.len() || params.len() != state.m.len() {
        return Err(Error::SizeMismatch(format!(
            "adam: {} parameters, {} gradient entries, {} moments",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// On-surface samples with ground-truth geometry and an off-surface oracle.
pub struct Dataset {
    pub name: String,
    pub points: Vec<SurfacePoint>,
    pub oracle: Box<dyn DistanceOracle>,
    /// Map from the original mesh frame to the training frame.
    pub normalization: Option<Normalization>,
}

impl Dataset {
    /// `n` area-uniform samples of an analytic surface, labeled with its
    /// exact geometry; the exact SDF serves as the off-surface oracle.
    pub fn analytic(surface: AnalyticSurface, n: usize, seed: u64) -> Result<Self> {
        surface.validate()?;
        if n == 0 {
            return Err(Error::Config("dataset needs at least one point".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n).map(|_| surface.sample_surface(&mut rng)).collect();
        let name = match &surface {
            AnalyticSurface::Sphere { .. } => "sphere",
            AnalyticSurface::Torus { .. } => "torus",
            AnalyticSurface::Plane { .. } => "plane",
        };
        Ok(Dataset {
            name: name.into(),
            points,
            oracle: Box::new(surface),
            normalization: None,
        })
    }

    /// Mesh vertices with discrete geometry, after normalizing the mesh into
    /// `[−0.9, 0.9]³`. Off-surface labels come from a KD-tree oracle.
    pub fn from_mesh(name: &str, mesh: &TriMesh) -> Result<Self> {
        let (mesh, normalization) = mesh.normalized(0.9);
        let geometry = vertex_geometry(&mesh);
        let mut points = Vec::new();
        for (v, g) in mesh.vertices.iter().zip(&geometry) {
            if g.flags.isolated {
                continue;
            }
            points.push(SurfacePoint {
                point: *v,
                normal: g.normal,
                kappa1: g.kappa1,
                kappa2: g.kappa2,
                e1: g.e1,
                e2: g.e2,
            });
        }
        if points.is_empty() {
            return Err(Error::Mesh("mesh has no usable vertices".into()));
        }
        let oracle = SdfOracle::new(
            points.iter().map(|p| p.point).collect(),
            points.iter().map(|p| p.normal).collect(),
            DEFAULT_K_SIGN,
        )?;
        Ok(Dataset {
            name: name.into(),
            points,
            oracle: Box::new(oracle),
            normalization: Some(normalization),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn features(&self) -> Vec<f64> {
        self.points.iter().map(|p| feature(p.kappa1, p.kappa2)).collect()
    }

    /// `q`-quantile (0..1) of `|κ1 − κ2|` over the dataset.
    pub fn anisotropy_quantile(&self, q: f64) -> f64 {
        let mut a: Vec<f64> = self.points.iter().map(|p| (p.kappa1 - p.kappa2).abs()).collect();
        a.sort_by(f64::total_cmp);
        let idx = ((a.len() - 1) as f64 * q).round() as usize;
        a[idx]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub layer_dims: Vec<usize>,
    pub omega0: f64,
    /// Class sizes of the curvature partition as fractions of the dataset.
    pub partition: [f64; 3],
    pub batch: BatchSpec,
    pub weights: LossWeights,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            learning_rate: 1e-4,
            layer_dims: vec![3, 80, 80, 1],
            omega0: DEFAULT_OMEGA0,
            partition: [0.5, 0.4, 0.1],
            batch: BatchSpec::default(),
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.omega0 > 0.0) {
            return Err(Error::Config("omega0 must be positive".into()));
        }
        crate::net::validate_dims(&self.layer_dims)?;
        self.batch.validate()?;
        self.weights.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Step-averaged loss over the epoch.
    pub loss: LossBreakdown,
    pub seconds: f64,
    pub points_visited: usize,
}

impl EpochLog {
    pub fn csv_header() -> String {
        format!("{},seconds,points_visited", LossBreakdown::csv_header())
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.loss.csv_row(self.epoch), self.seconds, self.points_visited)
    }
}

pub fn logs_to_csv(logs: &[EpochLog]) -> String {
    let mut s = EpochLog::csv_header();
    s.push('\n');
    for l in logs {
        s.push_str(&l.csv_row());
        s.push('\n');
    }
    s
}

fn average(acc: &mut Option<LossBreakdown>, b: &LossBreakdown, k: f64) {
    // running mean over the steps of an epoch
    let a = acc.get_or_insert_with(|| b.clone());
    if k == 1.0 {
        return;
    }
    let mix = |x: &mut Option<f64>, y: Option<f64>| {
        if let (Some(x), Some(y)) = (x.as_mut(), y) {
            *x += (y - *x) / k;
        }
    };
    mix(&mut a.eikonal, b.eikonal);
    mix(&mut a.dirichlet_on, b.dirichlet_on);
    mix(&mut a.dirichlet_off, b.dirichlet_off);
    mix(&mut a.neumann, b.neumann);
    mix(&mut a.dir_align, b.dir_align);
    mix(&mut a.curv_match, b.curv_match);
    mix(&mut a.siren_off, b.siren_off);
    a.total += (b.total - a.total) / k;
    a.neumann_skipped += b.neumann_skipped;
    a.dir_align_eligible += b.dir_align_eligible;
    a.curv_skipped += b.curv_skipped;
}

/// Called after every epoch; returning `false` stops training early.
pub type Observer<'a> = dyn FnMut(&EpochLog, &SineMlp) -> bool + 'a;

fn checkpoint_metadata(config: &TrainConfig, data: &Dataset, epoch: usize) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("source".into(), data.name.clone());
    meta.insert("epoch".into(), epoch.to_string());
    meta.insert("seed".into(), config.seed.to_string());
    if let Some(n) = &data.normalization {
        meta.insert(
            "normalization_center".into(),
            format!("{} {} {}", n.center.x, n.center.y, n.center.z),
        );
        meta.insert("normalization_scale".into(), n.scale.to_string());
    }
    meta
}

fn save_epoch(config: &TrainConfig, data: &Dataset, net: &SineMlp, epoch: usize, name: &str) -> Result<()> {
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Checkpoint::from_net(net, checkpoint_metadata(config, data, epoch)).save(dir.join(name))?;
    }
    Ok(())
}

/// Trains a freshly initialized network. See [`train_from`].
pub fn train(config: &TrainConfig, data: &Dataset, observer: &mut Observer) -> Result<(SineMlp, Vec<EpochLog>)> {
    config.validate()?;
    let net = SineMlp::init_siren(&config.layer_dims, config.omega0, config.seed)?;
    train_from(net, config, data, observer)
}

/// Optimizer and sampler state for one dataset, advanced one Adam step at a
/// time. The dataset is passed to every step and must be the one the
/// trainer was created with.
pub struct Trainer {
    pub net: SineMlp,
    n_points: usize,
    weights: LossWeights,
    sampler: Sampler,
    adam: AdamState,
    learning_rate: f64,
    steps_per_epoch: usize,
    steps: usize,
}

impl Trainer {
    /// The principal-direction threshold defaults to the 60th percentile of
    /// `|κ1 − κ2|` over the dataset when the config leaves it unset.
    pub fn new(net: SineMlp, config: &TrainConfig, data: &Dataset) -> Result<Self> {
        config.validate()?;
        if net.dims() != config.layer_dims.as_slice() {
            return Err(Error::Config(format!(
                "network dims {:?} differ from configured {:?}",
                net.dims(),
                config.layer_dims
            )));
        }
        let mut weights = config.weights.clone();
        if weights.e_region_threshold.is_none() {
            weights.e_region_threshold = Some(data.anisotropy_quantile(0.6));
        }
        let partition = Partition::from_fractions(&data.features(), config.partition)?;
        let mut spec = config.batch.clone();
        spec.seed = spec.seed.wrapping_add(config.seed);
        let sampler = Sampler::new(&partition, spec)?;
        Ok(Trainer {
            adam: AdamState::new(net.params().len()),
            net,
            n_points: data.len(),
            weights,
            sampler,
            learning_rate: config.learning_rate,
            steps_per_epoch: epoch_plan(data.len(), config.batch.m),
            steps: 0,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps_per_epoch
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    /// Samples a minibatch and applies one Adam update. Returns the loss
    /// before the update and the number of on-surface points visited.
    /// On a non-finite loss or gradient the network is left untouched.
    pub fn step(&mut self, data: &Dataset) -> Result<(LossBreakdown, usize)> {
        if data.len() != self.n_points {
            return Err(Error::SizeMismatch(format!(
                "trainer was built for {} points, dataset has {}",
                self.n_points,
                data.len()
            )));
        }
        let batch = self.sampler.sample_minibatch(&data.points, data.oracle.as_ref());
        let (breakdown, grad) = self.net.loss_param_gradient(&batch, &self.weights)?;
        let bad = breakdown
            .non_finite()
            .or_else(|| (!grad.as_slice().iter().all(|g| g.is_finite())).then_some("gradient"));
        if let Some(term) = bad {
            return Err(Error::Diverged {
                epoch: self.steps / self.steps_per_epoch + 1,
                term: term.into(),
            });
        }
        adam_step(&mut self.adam, self.net.params_mut(), grad.as_slice(), self.learning_rate)?;
        self.steps += 1;
        Ok((breakdown, batch.on_surface.len()))
    }
}

/// Runs `epochs × ⌈n/m⌉` Adam steps starting from `net`.
///
/// A non-finite loss or gradient stops training with [`Error::Diverged`];
/// the last finite network is written as `last_finite.json` when a
/// checkpoint directory is configured.
pub fn train_from(
    net: SineMlp,
    config: &TrainConfig,
    data: &Dataset,
    observer: &mut Observer,
) -> Result<(SineMlp, Vec<EpochLog>)> {
    let mut trainer = Trainer::new(net, config, data)?;
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut acc = None;
        let mut visited = 0;
        for step in 0..trainer.steps_per_epoch() {
            let (breakdown, n) = match trainer.step(data) {
                Ok(r) => r,
                Err(e @ Error::Diverged { .. }) => {
                    save_epoch(config, data, &trainer.net, epoch - 1, "last_finite.json")?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            visited += n;
            average(&mut acc, &breakdown, (step + 1) as f64);
        }
        let log = EpochLog {
            epoch,
            loss: acc.unwrap_or_default(),
            seconds: start.elapsed().as_secs_f64(),
            points_visited: visited,
        };
        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
            save_epoch(config, data, &trainer.net, epoch, &format!("epoch_{epoch:05}.json"))?;
        }
        let keep_going = observer(&log, &trainer.net);
        logs.push(log);
        if !keep_going {
            break;
        }
    }
    Ok((trainer.net, logs))
}

/// Reads the mesh normalization written by training, if any.
pub fn normalization_from_metadata(meta: &BTreeMap<String, String>) -> Result<Option<Normalization>> {
    let (Some(c), Some(s)) = (meta.get("normalization_center"), meta.get("normalization_scale")) else {
        return Ok(None);
    };
    let bad = || Error::CorruptCheckpoint("malformed normalization metadata".into());
    let c: Vec<f64> = c
        .split_whitespace()
        .map(|x| x.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let scale: f64 = s.parse().map_err(|_| bad())?;
    if c.len() != 3 || !(scale > 0.0) {
        return Err(bad());
    }
    Ok(Some(Normalization {
        center: nalgebra::Vector3::new(c[0], c[1], c[2]),
        scale,
    }))
}

/// Checkpoint of a trained network with the usual metadata.
pub fn final_checkpoint(net: &SineMlp, config: &TrainConfig, data: &Dataset, epochs_run: usize) -> Checkpoint {
    Checkpoint::from_net(net, checkpoint_metadata(config, data, epochs_run))
}
