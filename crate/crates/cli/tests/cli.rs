use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const AIS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/ais.csv");

fn robeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robeta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

fn estimates(v: &Value) -> Vec<f64> {
    v["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["estimate"].as_f64().unwrap())
        .collect()
}

fn fit_ais(extra: &[&str]) -> Value {
    let mut args = vec![
        "fit",
        "--data",
        AIS,
        "--response",
        "BFP",
        "--mean-cols",
        "LBM",
    ];
    args.extend_from_slice(extra);
    json(&robeta(&args))
}

/// Twenty responses pinned against 0 and 1, alternating.
fn two_point_data(dir: &Path) -> PathBuf {
    let path = dir.join("two_point.csv");
    let mut text = String::from("y,x\n");
    for i in 0..20 {
        let y = if i % 2 == 0 {
            "1e-12"
        } else {
            "0.999999999999"
        };
        text.push_str(&format!("{y},{}\n", (i * 7 % 20) as f64 / 20.0));
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn ais_fit_selects_q() {
    let v = fit_ais(&[]);
    assert_eq!(v["estimator"], "smle");
    assert_eq!(v["q"].as_f64(), Some(0.82));
    assert_eq!(v["tuning_trace"]["q_star"].as_f64(), Some(0.82));
    let e = estimates(&v);
    for (got, want) in e.iter().zip([0.782, -0.037, 5.366]) {
        assert!((got - want).abs() < 0.005, "{got} vs {want}");
    }
}

#[test]
fn smle_at_q_one_is_the_mle() {
    let mle = estimates(&fit_ais(&["--estimator", "mle"]));
    let smle = estimates(&fit_ais(&["--estimator", "smle", "--q", "1"]));
    for (a, b) in mle.iter().zip(&smle) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn bootstrap_p_values_are_reported_with_the_seed() {
    let v = fit_ais(&["--estimator", "mle", "--bootstrap", "49", "--seed", "3"]);
    assert_eq!(v["seed"].as_u64(), Some(3));
    let p = v["coefficients"][1]["p_bootstrap"].as_f64().unwrap();
    assert!(p <= 0.02, "{p}");
}

#[test]
fn tune_prints_the_trace() {
    let v = json(&robeta(&[
        "tune",
        "--data",
        AIS,
        "--response",
        "BFP",
        "--mean-cols",
        "LBM",
    ]));
    assert_eq!(v["q_star"].as_f64(), Some(0.82));
    assert!(!v["grids"].as_array().unwrap().is_empty());
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = robeta(&[
            "simulate",
            "--scenario",
            "1",
            "--n",
            "40",
            "--reps",
            "200",
            "--contaminate",
            "0.05",
            "--seed",
            "7",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        (
            std::fs::read(out_dir.join("replications.csv")).unwrap(),
            std::fs::read(out_dir.join("summary.json")).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    assert!(a == b, "two runs with the same seed differ");
    let summary: Value = serde_json::from_slice(&a.1).unwrap();
    assert_eq!(summary["summaries"].as_array().unwrap().len(), 3);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out_dir = dir.path().join(threads);
        let out = robeta(&[
            "--threads",
            threads,
            "simulate",
            "--reps",
            "30",
            "--contaminate",
            "0.05",
            "--seed",
            "5",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        std::fs::read(out_dir.join("replications.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn diagnose_writes_plot_ready_files() {
    let dir = tempfile::tempdir().unwrap();
    let fit_path = dir.path().join("fit.json");
    let out = robeta(&[
        "fit",
        "--data",
        AIS,
        "--response",
        "BFP",
        "--mean-cols",
        "LBM",
        "--out",
        fit_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = robeta(&[
        "diagnose",
        "--data",
        AIS,
        "--response",
        "BFP",
        "--mean-cols",
        "LBM",
        "--fit",
        fit_path.to_str().unwrap(),
        "--sims",
        "99",
        "--seed",
        "1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let envelope = std::fs::read_to_string(dir.path().join("envelope.csv")).unwrap();
    assert_eq!(envelope.lines().count(), 38);
    let d: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("diagnostics.json")).unwrap(),
    )
    .unwrap();
    let flagged: Vec<u64> = d["flagged"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert!(
        flagged.contains(&16) && flagged.contains(&30),
        "{flagged:?}"
    );
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = robeta(&[
        "fit",
        "--data",
        missing.to_str().unwrap(),
        "--response",
        "y",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = robeta(&[
        "fit",
        "--data",
        AIS,
        "--response",
        "BFP",
        "--mean-cols",
        "nope",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = robeta(&[
        "fit",
        "--data",
        AIS,
        "--response",
        "BFP",
        "--estimator",
        "smle",
        "--q",
        "abc",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let data = two_point_data(dir.path());
    let data = data.to_str().unwrap();
    let out = robeta(&[
        "fit",
        "--data",
        data,
        "--response",
        "y",
        "--mean-cols",
        "x",
        "--estimator",
        "smle",
        "--q",
        "0.5",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = robeta(&[
        "fit",
        "--data",
        data,
        "--response",
        "y",
        "--mean-cols",
        "x",
        "--estimator",
        "mdpde",
        "--q",
        "0.1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("hint"));
}
