use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hkf-ncs"));
    c.env_remove("HKF_OUT_DIR");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--config", s(&config("scalar.json")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "schema_version,step,x_true_0,u_0,est_available,est_0,recv_0,origin_0,applied_origin,delta_dev,cost"
    );
    assert_eq!(lines.count(), 50);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("two_state_lossy.json");
    for d in [&a, &b] {
        let out = run(&["run", "--config", s(&cfg), "--out", s(d.path()), "--seed", "42"]);
        assert_eq!(out.status.code(), Some(0));
    }
    let ta = std::fs::read(a.path().join("trace.csv")).unwrap();
    let tb = std::fs::read(b.path().join("trace.csv")).unwrap();
    assert_eq!(ta, tb);

    let c = tempfile::tempdir().unwrap();
    run(&["run", "--config", s(&cfg), "--out", s(c.path()), "--seed", "43"]);
    assert_ne!(ta, std::fs::read(c.path().join("trace.csv")).unwrap());
}

#[test]
fn bad_dimension_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("scalar.json"))
        .unwrap()
        .replace(r#""H": [[1.0]]"#, r#""H": [[1.0, 2.0]]"#);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["run", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sensors[0].H"));
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn missing_config_exits_2() {
    let out = run(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_and_fault_fails() {
    let cfg = config("scalar.json");
    let ok = run(&["verify", "--config", s(&cfg)]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS x_sum"));

    let bad = run(&["verify", "--config", s(&cfg), "--inject-fault", "corrupt-delta"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL delta_sum"));
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("HKF_OUT_DIR", dir.path())
        .args(["monte-carlo", "--config", s(&config("scalar.json")), "--runs", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 3);
    assert_eq!(summary["schema_version"], 1);

    let explicit = tempfile::tempdir().unwrap();
    bin()
        .env("HKF_OUT_DIR", dir.path())
        .args([
            "run",
            "--config",
            s(&config("scalar.json")),
            "--out",
            s(explicit.path()),
        ])
        .output()
        .unwrap();
    assert!(explicit.path().join("trace.csv").exists());
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "hgmm-sweep",
        "--config",
        s(&config("scalar.json")),
        "--runs",
        "4",
        "--alphas",
        "0.5,1,2",
        "--parallel",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(text.starts_with("alpha,mse,mse_se,mse_ci_low,mse_ci_high,cost,cost_se\n"));
    assert_eq!(text.lines().count(), 4);
}
