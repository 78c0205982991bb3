use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use tempfile::TempDir;

use randman::io::{curve_from_csv, read_matrix_csv, write_matrix_csv};

fn randman(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randman"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = randman(out, args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small rotation dataset and an RBF fit on it.
fn small_model(dir: &Path) -> PathBuf {
    ok(dir, &["synth-data", "--size", "8", "--n-rotations", "16"]);
    let data = dir.join("dataset.csv");
    ok(
        dir,
        &[
            "fit",
            "--data",
            path_str(&data),
            "--latent-dim",
            "2",
            "--max-iters",
            "60",
        ],
    );
    dir.join("model.txt")
}

#[test]
fn synth_data_shape() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["synth-data", "--size", "32", "--n-rotations", "100"],
    );
    let y = read_matrix_csv(&dir.path().join("dataset.csv")).unwrap();
    assert_eq!(y.shape(), (1024, 100));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("rows=1024") && manifest.contains("cols=100"));
}

#[test]
fn synth_data_is_deterministic_across_threads() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(
        a.path(),
        &[
            "synth-data",
            "--size",
            "12",
            "--n-rotations",
            "9",
            "--seed",
            "4",
            "--threads",
            "1",
        ],
    );
    ok(
        b.path(),
        &[
            "synth-data",
            "--size",
            "12",
            "--n-rotations",
            "9",
            "--seed",
            "4",
            "--threads",
            "4",
        ],
    );
    for f in ["dataset.csv", "image.pgm", "manifest.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn input_errors_exit_two_with_tag() {
    let dir = TempDir::new().unwrap();
    for args in [
        vec!["synth-data", "--n-rotations", "1"],
        vec!["balanced", "--family", "cauchy"],
        vec!["synth-data", "--no-such-flag"],
        vec!["swirl", "--samples", "1"],
    ] {
        let o = randman(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.starts_with("error[input]: "), "{err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    }
}

#[test]
fn latent_dim_beyond_data_is_rejected() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["synth-data", "--size", "8", "--n-rotations", "5"],
    );
    let data = dir.path().join("dataset.csv");
    let o = randman(
        dir.path(),
        &["fit", "--data", path_str(&data), "--latent-dim", "6"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_pgm_reports_byte_offset() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("bad.pgm");
    fs::write(&img, b"P5\n4 4\n255\nabc").unwrap();
    let o = randman(dir.path(), &["synth-data", "--image", path_str(&img)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("byte "), "{err}");
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\nsize = 9\nn-rotations = 7\nseed = 3\n").unwrap();
    ok(
        dir.path(),
        &[
            "synth-data",
            "--config",
            path_str(&cfg),
            "--n-rotations",
            "5",
        ],
    );
    let y = read_matrix_csv(&dir.path().join("dataset.csv")).unwrap();
    assert_eq!(y.shape(), (81, 5));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=3"));

    fs::write(&cfg, "colour = red\n").unwrap();
    let o = randman(dir.path(), &["synth-data", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn linear_model_gives_straight_geodesic() {
    let dir = TempDir::new().unwrap();
    // Y = A X for a fixed 6 × 2 map A.
    let x = DMatrix::from_fn(2, 20, |r, c| {
        ((c * 7 + r * 3) % 11) as f64 / 5.0 - 1.0 + 0.1 * r as f64
    });
    let a = DMatrix::from_fn(6, 2, |r, c| {
        ((r + 2 * c) as f64 * 0.7).sin() + 0.2 * c as f64
    });
    let data = dir.path().join("linear.csv");
    write_matrix_csv(&data, &(a * x)).unwrap();
    ok(
        dir.path(),
        &[
            "fit",
            "--data",
            path_str(&data),
            "--latent-dim",
            "2",
            "--kernel",
            "linear",
            "--max-iters",
            "100",
        ],
    );
    let model = dir.path().join("model.txt");
    ok(
        dir.path(),
        &[
            "geodesic",
            "--model",
            path_str(&model),
            "--from",
            "0",
            "--to",
            "1",
        ],
    );
    let curve = curve_from_csv(
        &fs::read_to_string(dir.path().join("geodesic.csv")).unwrap(),
        "curve",
    )
    .unwrap();
    let pt = |k: usize| nalgebra::DVector::from_column_slice(curve.point(k));
    let (p0, p1) = (pt(0), pt(curve.len() - 1));
    let chord = (&p1 - &p0).norm();
    for k in 0..curve.len() {
        let s = curve.params()[k];
        let line = &p0 + (&p1 - &p0) * s;
        assert!((pt(k) - line).norm() <= 1e-6 * chord);
    }
}

#[test]
fn geodesic_between_equal_points_is_a_single_point() {
    let dir = TempDir::new().unwrap();
    let model = small_model(dir.path());
    ok(
        dir.path(),
        &[
            "geodesic",
            "--model",
            path_str(&model),
            "--from",
            "3",
            "--to",
            "3",
        ],
    );
    let csv = fs::read_to_string(dir.path().join("geodesic.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let report = fs::read_to_string(dir.path().join("geodesic_report.txt")).unwrap();
    assert!(report.contains("length=0.0000000000000000e0"), "{report}");
}

#[test]
fn geodesic_iteration_cap_exits_four_and_keeps_curve() {
    let dir = TempDir::new().unwrap();
    let model = small_model(dir.path());
    let o = randman(
        dir.path(),
        &[
            "geodesic",
            "--model",
            path_str(&model),
            "--from",
            "0",
            "--to",
            "8",
            "--max-iters",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[nonconvergence]"));
    assert!(dir.path().join("geodesic.csv").exists());
    let report = fs::read_to_string(dir.path().join("geodesic_report.txt")).unwrap();
    assert!(report.contains("converged=false"));
}

#[test]
fn mean_only_decay_has_no_gap() {
    let dir = TempDir::new().unwrap();
    let model = small_model(dir.path());
    ok(
        dir.path(),
        &[
            "decay",
            "--model",
            path_str(&model),
            "--mean-only",
            "--samples",
            "50",
            "--nodes",
            "32",
        ],
    );
    let csv = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let (big_l, se, rel) = (f[1], f[3], f[4]);
        assert!(rel.abs() <= 4.0 * se / big_l + 1e-12, "{line}");
        assert_eq!(f[6], 0.0);
        rows += 1;
    }
    assert_eq!(rows, 4);
}

fn balanced_rows(dir: &Path, family: &str) -> Vec<Vec<f64>> {
    ok(
        dir,
        &[
            "balanced",
            "--family",
            family,
            "--n-grid",
            "1,10,100,1000",
            "--samples",
            "4000",
        ],
    );
    let csv = fs::read_to_string(dir.join("balanced.csv")).unwrap();
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn balanced_uniform_tracks_expansion() {
    let dir = TempDir::new().unwrap();
    for r in balanced_rows(dir.path(), "uniform") {
        assert!(r[7].is_nan());
        if r[0] >= 100.0 {
            assert!((r[5] - r[8]).abs() <= 4.0 * r[6], "{r:?}");
        }
    }
}

#[test]
fn balanced_deterministic_has_no_gap() {
    let dir = TempDir::new().unwrap();
    for r in balanced_rows(dir.path(), "deterministic") {
        assert!(r[9] <= 1e-12, "{r:?}");
        assert_eq!(r[6], 0.0);
    }
}

#[test]
fn swirl_summary_reports_invariants() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["swirl", "--samples", "3000", "--pairs", "50"]);
    let summary = fs::read_to_string(dir.path().join("swirl_summary.txt")).unwrap();
    let get = |k: &str| -> f64 {
        summary
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{k}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(get("max_rel_norm_error") <= 1e-12);
    assert!(get("max_rel_distance_change") > 0.1);
    assert!(summary.contains("origin_image=[0.0, 0.0]"));
    let pairs = fs::read_to_string(dir.path().join("swirl_pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 1 + 50 * 49 / 2);
}
