use neural_implicit::implicit_geom::AnalyticSurface;
use neural_implicit::net::SineMlp;
use neural_implicit::trainer::{train, Dataset, EpochLog, TrainConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Five 50-epoch runs on a sphere with default weights.
#[test]
fn default_training_converges_on_the_sphere() {
    let sphere = AnalyticSurface::Sphere { radius: 0.6 };
    let mut ratios = Vec::new();
    let mut drops = Vec::new();
    for seed in 0..5 {
        let data = Dataset::analytic(sphere, 2500, seed).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            seed,
            ..TrainConfig::default()
        };
        let (_, logs) = train(&cfg, &data, &mut |_: &EpochLog, _: &SineMlp| true).unwrap();
        assert_eq!(logs.len(), 50);
        let (first, last) = (&logs[0].loss, &logs[49].loss);
        ratios.push(last.dirichlet_on.unwrap() / first.dirichlet_on.unwrap());
        drops.push(last.total - first.total);
    }
    for r in &ratios {
        assert!(*r < 0.1, "dirichlet_on ratio per seed {ratios:?}");
    }
    assert!(median(drops.clone()) <= 0.0, "total loss change per seed {drops:?}");
}
