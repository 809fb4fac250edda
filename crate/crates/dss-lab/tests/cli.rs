use std::path::Path;
use std::process::{Command, Output};

use dss_lab::harness::Manifest;

fn dss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dss-lab"))
        .args(args)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn coeffs_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dss(&["coeffs", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(dir.path());
    assert!(m.passed);
    assert_eq!(m.exit_code, 0);
    for f in &m.outputs {
        assert!(dir.path().join(f).exists(), "{f} listed but missing");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(dss(&["dance"]).status.code(), Some(1));
    assert_eq!(dss(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"no_such_field": 1}"#).unwrap();
    assert_eq!(
        dss(&["coeffs", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(dss(&["--help"]).status.code(), Some(0));
}

#[test]
fn threshold_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    std::fs::write(&cfg, r#"{"coeffs": {"tolerance": 0.0}}"#).unwrap();
    let out = dss(&[
        "coeffs",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn precondition_failure_exits_one_and_solver_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, json: &str, sub: &str| {
        let cfg = dir.path().join(name);
        std::fs::write(&cfg, json).unwrap();
        let out = dir.path().join(format!("{name}.out"));
        dss(&[
            sub,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status
        .code()
    };
    let large = r#"{"convergence": {"params": {"re": 0.0, "pe": 1.0, "eps": 0.1,
        "lambda": 5.0, "theta": 0.4, "u0_swim": 0.5, "dim": 2}}}"#;
    assert_eq!(run("large.json", large, "convergence"), Some(1));
    let stiff = r#"{"simulate": {"t_end": 0.5, "interval": 0.5,
        "kinetic": {"n": 16, "m_max": 8, "dt": 0.25, "dt_floor": 0.2},
        "forcing": {"preset": "cellular", "amp": 50.0, "freq": 0.0}}}"#;
    assert_eq!(run("stiff.json", stiff, "simulate"), Some(3));
}

#[test]
fn simulate_reruns_bit_identically_from_saved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 7, "simulate": {"t_end": 0.05, "interval": 0.025,
            "kinetic": {"n": 16, "m_max": 8, "dt": 0.005},
            "rho_init": {"kind": "random", "count": 3, "kmax": 2, "amp": 0.3}}}"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        dss(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            a.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    let saved = a.join("config.json");
    assert_eq!(
        dss(&[
            "simulate",
            "--config",
            saved.to_str().unwrap(),
            "--out",
            b.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    let outputs = manifest(&a).outputs;
    assert!(outputs.iter().any(|f| f.ends_with(".bin")));
    for f in outputs.iter().filter(|f| !f.ends_with(".json")) {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}
