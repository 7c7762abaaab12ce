use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neural_implicit::discrete_geom::{bumpy_sphere, save_obj};

fn nisurf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nisurf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    std::fs::write(
        &path,
        r#"{
            "train": {"epochs": 2, "layer_dims": [3, 16, 16, 1], "batch": {"m": 200}},
            "dataset": {"points": 400},
            "eval": {"repetitions": 2, "n_surface": 200, "n_domain": 200}
        }"#,
    )
    .unwrap();
    path
}

fn mesh(dir: &Path) -> PathBuf {
    let path = dir.join("bumpy.obj");
    save_obj(&bumpy_sphere(2, 1.0), &path).unwrap();
    path
}

#[test]
fn train_writes_checkpoint_and_csv_then_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let ckpt = dir.path().join("s.ckpt");
    let o = nisurf(&["train", "--surface", "sphere", "--config", s(&cfg), "--out", s(&ckpt), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ckpt.exists());
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("epoch,eikonal"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("epoch ")).count(), 2);

    let o = nisurf(&["eval", "--model", s(&ckpt), "--surface", "sphere", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "method,model,domain_mean,domain_max,surface_mean,surface_max,alignment_mean,alignment_max");
    assert!(lines[1].starts_with("ours,sphere,"));
    assert_eq!(lines[1].split(',').count(), 8);

    let img = dir.path().join("s.ppm");
    let o = nisurf(&["render", "--model", s(&ckpt), "--mode", "phong", "--width", "32", "--height", "24", "--out", s(&img)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(&img).unwrap();
    assert!(bytes.starts_with(b"P6\n32 24\n255\n"));
    assert_eq!(bytes.len(), "P6\n32 24\n255\n".len() + 32 * 24 * 3);
}

#[test]
fn training_is_deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    for out in [&a, &b] {
        let o = nisurf(&["train", "--surface", "torus", "--config", s(&cfg), "--out", s(out), "--seed", "8"]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn gaussian_render_of_sphere_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("r.json");
    std::fs::write(&cfg, r#"{"render": {"curvature_range": [0.0, 5.5555555555555555]}}"#).unwrap();
    let img = dir.path().join("g.ppm");
    let o = nisurf(&[
        "render", "--surface", "sphere", "--mode", "gaussian", "--config", s(&cfg), "--width", "64", "--height", "64", "--out", s(&img),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(&img).unwrap();
    let header = "P6\n64 64\n255\n".len();
    let hits: Vec<&[u8]> = bytes[header..].chunks(3).filter(|p| *p != [0, 0, 0]).collect();
    assert!(hits.len() > 100);
    for p in &hits {
        for c in 0..3 {
            assert!((p[c] as i32 - hits[0][c] as i32).abs() <= 1);
        }
    }
}

#[test]
fn curvature_methods_agree_on_vertex_count() {
    let dir = tempfile::tempdir().unwrap();
    let obj = mesh(dir.path());
    let cfg = small_config(dir.path());
    let ckpt = dir.path().join("m.ckpt");
    let o = nisurf(&["train", "--mesh", s(&obj), "--config", s(&cfg), "--out", s(&ckpt)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = dir.path().join("d.csv");
    let n = dir.path().join("n.csv");
    assert_eq!(code(&nisurf(&["curvature", "--mesh", s(&obj), "--method", "discrete", "--out", s(&d)])), 0);
    assert_eq!(
        code(&nisurf(&["curvature", "--mesh", s(&obj), "--method", "neural", "--model", s(&ckpt), "--out", s(&n)])),
        0
    );
    let (d, n) = (std::fs::read_to_string(d).unwrap(), std::fs::read_to_string(n).unwrap());
    assert_eq!(d.lines().next(), n.lines().next());
    assert_eq!(d.lines().count(), n.lines().count());
    assert_eq!(d.lines().count(), 1 + 162);

    let o = nisurf(&["eval", "--model", s(&ckpt), "--mesh", s(&obj), "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ours,bumpy,"));
}

#[test]
fn sample_stats_sizes_sum_to_n() {
    let dir = tempfile::tempdir().unwrap();
    let obj = mesh(dir.path());
    let o = nisurf(&["sample-stats", "--mesh", s(&obj), "--n1", "0.5", "--n2", "0.4", "--n3", "0.1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    let sizes: Vec<usize> = out.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(sizes, vec![81, 64, 17]);
    assert_eq!(sizes.iter().sum::<usize>(), 162);
}

#[test]
fn rbf_reports_a_metric_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = nisurf(&["rbf", "--surface", "sphere", "--m", "200", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').skip(2).map(|x| x.parse().unwrap()).collect();
    assert!(row[2] < 1e-3, "surface mean {}", row[2]);
    assert_eq!(code(&nisurf(&["rbf", "--surface", "sphere", "--m", "4000"])), 2);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.ckpt");
    let missing = dir.path().join("missing.obj");
    assert_eq!(code(&nisurf(&["train", "--mesh", s(&missing), "--out", s(&out)])), 3);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"train": {"epochs": 1, "colour": "red"}}"#).unwrap();
    assert_eq!(code(&nisurf(&["train", "--surface", "sphere", "--config", s(&bad), "--out", s(&out)])), 4);

    let img = dir.path().join("x.ppm");
    assert_eq!(code(&nisurf(&["render", "--surface", "sphere", "--mode", "toon", "--out", s(&img)])), 2);
    // conflicting sources fail before any work
    assert_eq!(code(&nisurf(&["train", "--surface", "sphere", "--mesh", s(&missing), "--out", s(&out)])), 2);
    assert_eq!(code(&nisurf(&["curvature", "--mesh", s(&missing), "--method", "neural", "--out", s(&img)])), 2);

    let diverging = dir.path().join("nan.json");
    std::fs::write(&diverging, r#"{"train": {"epochs": 3, "layer_dims": [3, 8, 1], "learning_rate": 1e300}, "dataset": {"points": 100}}"#).unwrap();
    let o = nisurf(&["train", "--surface", "sphere", "--config", s(&diverging), "--out", s(&out)]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("last_finite.json").exists());
}

#[test]
fn every_command_has_help() {
    for cmd in ["train", "render", "eval", "curvature", "rbf", "sample-stats"] {
        let o = nisurf(&[cmd, "--help"]);
        assert_eq!(code(&o), 0);
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}
