//! Curvature-biased minibatch sampling.
//!
//! On-surface points are sorted by the feature `|κ1| + |κ2|` and split into
//! low, medium and high classes. Each minibatch draws a fixed number of
//! points from every class. Within a class, points are visited in a shuffled
//! order without replacement and the order is reshuffled once exhausted, so
//! every point of a class is seen equally often.

use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::implicit_geom::SurfacePoint;
use crate::sdf_oracle::DistanceOracle;

/// Number of iterations in one epoch.
pub fn epoch_plan(n: usize, m: usize) -> usize {
    assert!(n > 0 && m > 0, "epoch_plan needs positive sizes");
    n.div_ceil(m)
}

pub fn feature(kappa1: f64, kappa2: f64) -> f64 {
    kappa1.abs() + kappa2.abs()
}

/// Splits `m` into integer counts proportional to `fractions` using the
/// largest-remainder rule (ties go to the lower class).
pub fn largest_remainder(m: usize, fractions: [f64; 3]) -> [usize; 3] {
    let raw = fractions.map(|p| p * m as f64);
    let mut counts = raw.map(|r| r.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(m.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Feature-sorted split of the on-surface points into three classes.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    /// Point indices sorted by feature ascending, ties by index.
    pub order: Vec<usize>,
    pub sizes: [usize; 3],
}

impl Partition {
    pub fn by_curvature(features: &[f64], n1: usize, n2: usize, n3: usize) -> Result<Self> {
        if n1 + n2 + n3 != features.len() {
            return Err(Error::SizeMismatch(format!(
                "class sizes {n1}+{n2}+{n3} do not add up to {} points",
                features.len()
            )));
        }
        let mut order: Vec<usize> = (0..features.len()).collect();
        // sort_by is stable, so equal features keep index order
        order.sort_by(|&a, &b| features[a].total_cmp(&features[b]));
        Ok(Partition {
            order,
            sizes: [n1, n2, n3],
        })
    }

    /// Class sizes `⌊f1·n⌋`, `⌊f2·n⌋` and the remainder.
    pub fn from_fractions(features: &[f64], fractions: [f64; 3]) -> Result<Self> {
        check_fractions(fractions)?;
        let n = features.len();
        let n1 = (fractions[0] * n as f64).floor() as usize;
        let n2 = ((fractions[1] * n as f64).floor() as usize).min(n - n1);
        Self::by_curvature(features, n1, n2, n - n1 - n2)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn class(&self, c: usize) -> &[usize] {
        let start: usize = self.sizes[..c].iter().sum();
        &self.order[start..start + self.sizes[c]]
    }

    /// Class of every point, indexed by point.
    pub fn labels(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len()];
        for c in 0..3 {
            for &i in self.class(c) {
                out[i] = c as u8;
            }
        }
        out
    }

    /// Fractions that reproduce uniform sampling over all points.
    pub fn uniform_fractions(&self) -> [f64; 3] {
        let n = self.len() as f64;
        self.sizes.map(|s| s as f64 / n)
    }

    /// One summary row per class: `class,size,kappa_min,kappa_max`.
    pub fn summary_csv(&self, features: &[f64]) -> String {
        let mut out = String::from("class,size,kappa_min,kappa_max\n");
        for c in 0..3 {
            let idx = self.class(c);
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(features[i]), hi.max(features[i]))
            });
            if idx.is_empty() {
                out.push_str(&format!("V{},0,,\n", c + 1));
            } else {
                out.push_str(&format!("V{},{},{lo},{hi}\n", c + 1, idx.len()));
            }
        }
        out
    }
}

fn check_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Config(format!("invalid sampling fractions {fractions:?}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("sampling fractions sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            min: [-1.0; 3],
            max: [1.0; 3],
        }
    }
}

impl Domain {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3<f64> {
        Point3::new(
            rng.random_range(self.min[0]..self.max[0]),
            rng.random_range(self.min[1]..self.max[1]),
            rng.random_range(self.min[2]..self.max[2]),
        )
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSpec {
    /// On-surface points per minibatch.
    pub m: usize,
    pub fractions: [f64; 3],
    /// Off-surface points per minibatch; `None` means `m`.
    pub m_off: Option<usize>,
    pub domain: Domain,
    pub seed: u64,
}

impl Default for BatchSpec {
    fn default() -> Self {
        BatchSpec {
            m: 2500,
            fractions: [0.5, 0.4, 0.1],
            m_off: None,
            domain: Domain::default(),
            seed: 0,
        }
    }
}

impl BatchSpec {
    pub fn off_count(&self) -> usize {
        self.m_off.unwrap_or(self.m)
    }

    pub fn class_counts(&self) -> [usize; 3] {
        largest_remainder(self.m, self.fractions)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("minibatch size m must be positive".into()));
        }
        check_fractions(self.fractions)?;
        if (0..3).any(|a| !(self.domain.max[a] > self.domain.min[a])) {
            return Err(Error::Config("domain box is empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnSurfaceSample {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    /// `|κ1 − κ2|`, compared against the direction-alignment threshold.
    pub anisotropy: f64,
    pub index: usize,
}

impl OnSurfaceSample {
    pub fn from_surface(index: usize, s: &SurfacePoint) -> Self {
        OnSurfaceSample {
            point: s.point,
            normal: s.normal,
            kappa1: s.kappa1,
            kappa2: s.kappa2,
            e1: s.e1,
            e2: s.e2,
            anisotropy: (s.kappa1 - s.kappa2).abs(),
            index,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffSurfaceSample {
    pub point: Point3<f64>,
    pub sdf: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Minibatch {
    pub on_surface: Vec<OnSurfaceSample>,
    pub off_surface: Vec<OffSurfaceSample>,
    /// Some class was asked for more points than it holds, so the batch
    /// repeats points.
    pub oversubscribed: bool,
}

impl Minibatch {
    /// All points, on-surface first.
    pub fn points(&self) -> Vec<Point3<f64>> {
        self.on_surface
            .iter()
            .map(|s| s.point)
            .chain(self.off_surface.iter().map(|s| s.point))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.on_surface.len() + self.off_surface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-class cycling queue.
#[derive(Clone, Debug)]
struct ClassQueue {
    items: Vec<usize>,
    cursor: usize,
}

impl ClassQueue {
    fn take(&mut self, count: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        for _ in 0..count {
            if self.cursor == self.items.len() {
                self.items.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.items[self.cursor]);
            self.cursor += 1;
        }
    }
}

/// Stateful minibatch generator owning its random stream.
#[derive(Clone, Debug)]
pub struct Sampler {
    spec: BatchSpec,
    counts: [usize; 3],
    queues: [ClassQueue; 3],
    oversubscribed: bool,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(partition: &Partition, spec: BatchSpec) -> Result<Self> {
        spec.validate()?;
        let counts = spec.class_counts();
        for c in 0..3 {
            if counts[c] > 0 && partition.sizes[c] == 0 {
                return Err(Error::EmptyClass {
                    class: c + 1,
                    fraction: spec.fractions[c],
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let queues = [0, 1, 2].map(|c| {
            let mut items = partition.class(c).to_vec();
            items.shuffle(&mut rng);
            ClassQueue { items, cursor: 0 }
        });
        let oversubscribed = (0..3).any(|c| counts[c] > partition.sizes[c]);
        Ok(Sampler {
            spec,
            counts,
            queues,
            oversubscribed,
            rng,
        })
    }

    pub fn spec(&self) -> &BatchSpec {
        &self.spec
    }

    pub fn class_counts(&self) -> [usize; 3] {
        self.counts
    }

    /// Point indices of the next on-surface draw, grouped by class.
    pub fn next_indices(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.spec.m);
        for c in 0..3 {
            self.queues[c].take(self.counts[c], &mut self.rng, &mut out);
        }
        out
    }

    pub fn sample_minibatch(
        &mut self,
        data: &[SurfacePoint],
        oracle: &dyn DistanceOracle,
    ) -> Minibatch {
        let on_surface = self
            .next_indices()
            .into_iter()
            .map(|i| OnSurfaceSample::from_surface(i, &data[i]))
            .collect();
        let off_surface = (0..self.spec.off_count())
            .map(|_| {
                let point = self.spec.domain.sample(&mut self.rng);
                OffSurfaceSample {
                    point,
                    sdf: oracle.signed_distance(&point),
                }
            })
            .collect();
        Minibatch {
            on_surface,
            off_surface,
            oversubscribed: self.oversubscribed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit_geom::AnalyticSurface;
    use proptest::prelude::*;

    fn linear_features(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn epoch_plan_examples() {
        assert_eq!(epoch_plan(172_974, 10_000), 18);
        assert_eq!(epoch_plan(7, 7), 1);
        assert_eq!(epoch_plan(10, 3), 4);
    }

    #[test]
    fn partition_by_index_value() {
        let p = Partition::by_curvature(&linear_features(10), 5, 4, 1).unwrap();
        assert_eq!(p.class(0), &[0, 1, 2, 3, 4]);
        assert_eq!(p.class(1), &[5, 6, 7, 8]);
        assert_eq!(p.class(2), &[9]);
    }

    #[test]
    fn equal_features_fall_back_to_index_order() {
        let p = Partition::by_curvature(&[1.0; 6], 2, 2, 2).unwrap();
        assert_eq!(p.order, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn paper_split_sizes() {
        let n = 20_001;
        let f: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64).collect();
        let p = Partition::from_fractions(&f, [0.5, 0.4, 0.1]).unwrap();
        assert_eq!(p.sizes[0], n / 2);
        assert_eq!(p.sizes[1], 4 * n / 10);
        assert_eq!(p.sizes.iter().sum::<usize>(), n);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(matches!(
            Partition::by_curvature(&linear_features(10), 5, 4, 2),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn empty_class_with_positive_fraction() {
        let p = Partition::by_curvature(&linear_features(10), 5, 5, 0).unwrap();
        let spec = BatchSpec {
            m: 4,
            fractions: [0.0, 0.5, 0.5],
            ..Default::default()
        };
        assert!(matches!(Sampler::new(&p, spec), Err(Error::EmptyClass { class: 3, .. })));
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(largest_remainder(10, [1.0 / 3.0; 3]), [4, 3, 3]);
        assert_eq!(largest_remainder(7, [0.5, 0.4, 0.1]), [3, 3, 1]);
        assert_eq!(largest_remainder(5, [0.0, 0.0, 1.0]), [0, 0, 5]);
    }

    fn sphere_data(n: usize) -> Vec<SurfacePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = AnalyticSurface::Sphere { radius: 0.5 };
        (0..n).map(|_| s.sample_surface(&mut rng)).collect()
    }

    #[test]
    fn high_class_only() {
        let data = sphere_data(100);
        let p = Partition::by_curvature(&linear_features(100), 50, 40, 10).unwrap();
        let spec = BatchSpec {
            m: 25,
            fractions: [0.0, 0.0, 1.0],
            ..Default::default()
        };
        let mut s = Sampler::new(&p, spec).unwrap();
        let b = s.sample_minibatch(&data, &AnalyticSurface::Sphere { radius: 0.5 });
        assert!(b.on_surface.iter().all(|e| e.index >= 90));
        assert!(b.oversubscribed);
        assert_eq!(b.on_surface.len(), 25);
        assert_eq!(b.off_surface.len(), 25);
    }

    #[test]
    fn determinism_and_domain() {
        let data = sphere_data(200);
        let f: Vec<f64> = data.iter().map(|d| feature(d.kappa1, d.kappa2)).collect();
        let p = Partition::from_fractions(&f, [0.5, 0.4, 0.1]).unwrap();
        let spec = BatchSpec {
            m: 30,
            m_off: Some(17),
            seed: 3,
            ..Default::default()
        };
        let oracle = AnalyticSurface::Sphere { radius: 0.5 };
        let mut a = Sampler::new(&p, spec.clone()).unwrap();
        let mut b = Sampler::new(&p, spec).unwrap();
        for _ in 0..5 {
            let x = a.sample_minibatch(&data, &oracle);
            assert_eq!(x, b.sample_minibatch(&data, &oracle));
            assert_eq!(x.off_surface.len(), 17);
            assert!(x.off_surface.iter().all(|o| Domain::default().contains(&o.point)));
        }
    }

    /// Chi-square goodness of fit of per-point inclusion counts.
    fn inclusion_chi2(counts: &[usize]) -> (f64, f64) {
        let total: usize = counts.iter().sum();
        let expected = total as f64 / counts.len() as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        (chi2, (counts.len() - 1) as f64)
    }

    #[test]
    fn uniform_fractions_give_uniform_inclusion() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let n = 200;
        let f: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64).collect();
        let p = Partition::from_fractions(&f, [0.5, 0.4, 0.1]).unwrap();
        let spec = BatchSpec {
            m: 20,
            fractions: p.uniform_fractions(),
            m_off: Some(0),
            seed: 11,
            ..Default::default()
        };
        let mut s = Sampler::new(&p, spec).unwrap();
        let mut counts = vec![0usize; n];
        let mut draws = 0;
        while draws < 100_000 {
            for i in s.next_indices() {
                counts[i] += 1;
                draws += 1;
            }
        }
        let (chi2, dof) = inclusion_chi2(&counts);
        let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
        assert!(p_value > 0.01, "chi2 {chi2} p {p_value}");
    }

    #[test]
    fn duplicated_proportions_double_the_rate() {
        let n = 1000;
        let p = Partition::by_curvature(&linear_features(n), 500, 400, 100).unwrap();
        // medium and high proportions doubled, low takes the rest
        let spec = BatchSpec {
            m: 100,
            fractions: [0.0, 0.8, 0.2],
            m_off: Some(0),
            ..Default::default()
        };
        let mut s = Sampler::new(&p, spec).unwrap();
        let mut counts = vec![0usize; n];
        for _ in 0..200 {
            for i in s.next_indices() {
                counts[i] += 1;
            }
        }
        let uniform_rate = 200.0 * 100.0 / n as f64;
        for &i in &p.order[500..] {
            assert!((counts[i] as f64 / uniform_rate - 2.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn partition_is_a_disjoint_cover(f in proptest::collection::vec(0.0f64..5.0, 3..60), a in 0usize..100, b in 0usize..100) {
            let n = f.len();
            let n1 = a % (n + 1);
            let n2 = b % (n - n1 + 1);
            let p = Partition::by_curvature(&f, n1, n2, n - n1 - n2).unwrap();
            let mut seen = vec![false; n];
            for c in 0..3 {
                for &i in p.class(c) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            for c in 0..2 {
                let hi = p.class(c).iter().map(|&i| f[i]).fold(f64::NEG_INFINITY, f64::max);
                let lo = p.class(c + 1).iter().map(|&i| f[i]).fold(f64::INFINITY, f64::min);
                prop_assert!(hi <= lo);
            }
        }

        #[test]
        fn batch_counts_are_exact(m in 1usize..200, w in proptest::array::uniform3(0.01f64..1.0)) {
            let s: f64 = w.iter().sum();
            let fr = w.map(|x| x / s);
            let c = largest_remainder(m, fr);
            prop_assert_eq!(c.iter().sum::<usize>(), m);
            for i in 0..3 {
                prop_assert!((c[i] as f64 - fr[i] * m as f64).abs() < 1.0);
            }
        }
    }
}
