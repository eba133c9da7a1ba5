use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn distgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distgp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Six sampled observations with irregular targets, which keep the fitted
/// covariance well conditioned.
fn sampled_dataset(dir: &TempDir) -> (PathBuf, PathBuf, Vec<f64>) {
    let mut samples = String::from("obs_id,value\n");
    let mut targets = String::from("obs_id,y\n");
    let mut ys = Vec::new();
    for i in 0..6 {
        let c = 0.3 * i as f64;
        let xs = [c - 0.2, c, c + 0.1, c + 0.4];
        for x in xs {
            samples.push_str(&format!("obs{i},{x}\n"));
        }
        let y = [0.3, -1.2, 0.8, 2.0, -0.5, 1.1][i];
        targets.push_str(&format!("obs{i},{y}\n"));
        ys.push(y);
    }
    (
        write(dir, "samples.csv", &samples),
        write(dir, "targets.csv", &targets),
        ys,
    )
}

fn density_dataset(dir: &TempDir) -> (PathBuf, PathBuf) {
    let mut dens = String::from("obs_id,x,f\n");
    let mut targets = String::from("obs_id,y\n");
    for i in 0..8 {
        let mu = 0.3 + 0.05 * i as f64;
        let sd = 0.05 + 0.01 * i as f64;
        let xs: Vec<f64> = (0..101).map(|j| j as f64 / 100.0).collect();
        let raw: Vec<f64> = xs.iter().map(|x| (-0.5 * ((x - mu) / sd).powi(2)).exp()).collect();
        let total: f64 = raw.windows(2).map(|w| 0.5 * (w[0] + w[1]) * 0.01).sum();
        for (x, f) in xs.iter().zip(&raw) {
            dens.push_str(&format!("d{i},{x},{}\n", f / total));
        }
        targets.push_str(&format!("d{i},{}\n", mu / (0.05 + sd)));
    }
    (write(dir, "dens.csv", &dens), write(dir, "dens_targets.csv", &targets))
}

#[test]
fn distance_examples() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.csv", "obs_id,value\na,0\na,1\n");
    let b = write(&dir, "b.csv", "obs_id,value\nb,0\nb,2\n");
    let x = write(&dir, "x.csv", "obs_id,value\nx,3\n");
    let y = write(&dir, "y.csv", "obs_id,value\ny,5.5\n");

    let o = distgp(&["distance", s(&a), s(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "0.707106781187");
    assert_eq!(stdout(&distgp(&["distance", s(&a), s(&a)])).trim(), "0");
    assert_eq!(
        stdout(&distgp(&["distance", s(&x), s(&y), "--grid-size", "16"])).trim(),
        "2.5"
    );
}

#[test]
fn distance_accepts_densities() {
    let dir = TempDir::new().unwrap();
    let u = write(&dir, "u.csv", "obs_id,x,f\nu,0,1\nu,0.5,1\nu,1,1\n");
    let p = write(&dir, "p.csv", "obs_id,value\np,0.5\n");
    let o = distgp(&["distance", s(&u), s(&p), "--grid-size", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // W₂(U[0,1], δ_½)² = 1/12, up to the midpoint rule.
    let d: f64 = stdout(&o).trim().parse().unwrap();
    assert!((d - (1.0f64 / 12.0).sqrt()).abs() < 1e-6);
}

#[test]
fn fit_then_predict_reproduces_targets() {
    let dir = TempDir::new().unwrap();
    let (samples, targets, ys) = sampled_dataset(&dir);
    let model = dir.path().join("model.json");
    let o = distgp(&[
        "fit",
        "--inputs",
        s(&samples),
        "--targets",
        s(&targets),
        "--out",
        s(&model),
        "--starts",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["kernel"], "powexp");
    assert!(summary["criterion"].as_f64().unwrap().is_finite());
    assert_eq!(summary["information"]["eigenvalues"].as_array().unwrap().len(), 3);

    let o = distgp(&["predict", "--model", s(&model), "--inputs", s(&samples)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("obs_id,mean,sd"));
    for (line, y) in lines.zip(&ys) {
        let fields: Vec<&str> = line.split(',').collect();
        let mean: f64 = fields[1].parse().unwrap();
        assert!((mean - y).abs() < 1e-8 * y.abs().max(1.0), "{line} vs {y}");
    }
}

#[test]
fn refit_with_same_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (samples, targets, _) = sampled_dataset(&dir);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = distgp(&[
            "fit",
            "--inputs",
            s(&samples),
            "--targets",
            s(&targets),
            "--out",
            s(&out),
            "--nugget",
            "fit",
            "--seed",
            "5",
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let a = run("a.json", "1");
    assert_eq!(a, run("b.json", "1"));
    assert_eq!(a, run("c.json", "2"));
}

#[test]
fn two_points_are_enough() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.csv", "obs_id,value\np,0\nq,1\n");
    let y = write(&dir, "y.csv", "obs_id,y\nq,2\np,1\n");
    let model = dir.path().join("m.json");
    let o = distgp(&[
        "fit",
        "--inputs",
        s(&x),
        "--targets",
        s(&y),
        "--out",
        s(&model),
        "--kernel",
        "fbm",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn projection_kernels_round_trip() {
    let dir = TempDir::new().unwrap();
    let (dens, targets) = density_dataset(&dir);
    for kernel in ["legendre", "pca"] {
        let model = dir.path().join(format!("{kernel}.json"));
        let o = distgp(&[
            "fit",
            "--inputs",
            s(&dens),
            "--targets",
            s(&targets),
            "--out",
            s(&model),
            "--kernel",
            kernel,
            "--order",
            "3",
            "--starts",
            "2",
        ]);
        assert!(o.status.success(), "{kernel}: {}", stderr(&o));
        let preds = dir.path().join(format!("{kernel}.csv"));
        let o = distgp(&[
            "predict",
            "--model",
            s(&model),
            "--inputs",
            s(&dens),
            "--out",
            s(&preds),
        ]);
        assert!(o.status.success(), "{kernel}: {}", stderr(&o));
        assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 9);
    }
    let (samples, _, _) = sampled_dataset(&dir);
    let o = distgp(&[
        "fit",
        "--inputs",
        s(&samples),
        "--targets",
        s(&targets),
        "--out",
        "unused.json",
        "--kernel",
        "legendre",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.csv", "obs_id,value\na,0\na,1\n");
    let b = write(&dir, "b.csv", "obs_id,value\nb,0\nb,2\n");
    let cfg = write(&dir, "run.cfg", "# settings\ngrid-size = 3\n");
    // On three grid levels the middle one resolves to the lower atom.
    let coarse = stdout(&distgp(&["distance", s(&a), s(&b), "--config", s(&cfg)]));
    let fine = stdout(&distgp(&[
        "distance",
        s(&a),
        s(&b),
        "--config",
        s(&cfg),
        "--grid-size",
        "4",
    ]));
    assert_eq!(coarse.trim(), "0.57735026919");
    assert_eq!(fine.trim(), "0.707106781187");

    let bad = write(&dir, "bad.cfg", "grid-size = 3\nflavour = mint\n");
    let o = distgp(&["distance", s(&a), s(&b), "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.cfg:2"));
}

#[test]
fn malformed_input_names_file_and_row() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "obs_id,value\na,1\na,one\n");
    let ok = write(&dir, "ok.csv", "obs_id,value\nb,1\n");
    let o = distgp(&["distance", s(&bad), s(&ok)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("bad.csv:3"), "{err}");

    let o = distgp(&["predict", "--model", s(&ok), "--inputs", s(&ok)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn singular_covariance_is_a_numeric_failure() {
    let dir = TempDir::new().unwrap();
    // Both inputs sit at the fBm origin, so the Gram matrix is identically zero.
    let x = write(&dir, "x.csv", "obs_id,value\np,0\nq,0\n");
    let y = write(&dir, "y.csv", "obs_id,y\np,1\nq,2\n");
    let o = distgp(&[
        "fit",
        "--inputs",
        s(&x),
        "--targets",
        s(&y),
        "--out",
        s(&dir.path().join("m.json")),
        "--kernel",
        "fbm",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn diagnose_writes_json_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("negdef.json");
    let o = distgp(&["diagnose", "negdef", "--configs", "5", "--seed", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(report["suite"], "negdef");
    let records = report["records"].as_array().unwrap();
    assert_eq!(records.len(), 5 * 4 + 3);
    assert!(records.iter().all(|r| r["pass"] == true));
}

#[test]
fn small_benchmark_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t2");
    let o = distgp(&[
        "benchmark",
        "table2",
        "--n-train",
        "15",
        "--n-test",
        "10",
        "--samples",
        "50",
        "--starts",
        "2",
        "--grid-size",
        "64",
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("kernel regression"));
    for f in ["report.json", "rows.csv", "pairs.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(
        std::fs::read_to_string(out.join("pairs.csv")).unwrap().lines().count(),
        1 + 2 * 10
    );
}
