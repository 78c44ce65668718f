use std::path::PathBuf;
use std::process::Command;

fn deepo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deepo"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn run_writes_requested_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = deepo()
        .args(["run", scenario("converter.json").to_str().unwrap(), "--csv", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["steps"], 1100);
    let csv = std::fs::read_to_string(dir.path().join("converter.csv")).unwrap();
    assert!(csv.starts_with("t,u0,u1,y0,y1,"));
    assert!(!csv.contains('\r'));
    assert!(!dir.path().join("converter.json").exists());
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = deepo()
            .args(["run", scenario("converter.json").to_str().unwrap(), "--csv", "--seed", seed, "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read_to_string(dir.path().join("converter.csv")).unwrap()
    };
    assert_eq!(run("4"), run("4"));
    assert_ne!(run("4"), run("5"));
}

#[test]
fn adapt_compares_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = deepo()
        .args(["adapt", scenario("adaptation.json").to_str().unwrap(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["adaptive_post_disturbance_rms"].as_f64().unwrap() < summary["frozen_post_disturbance_rms"].as_f64().unwrap());
    for f in ["adaptation_adaptive.csv", "adaptation_adaptive.json", "adaptation_frozen.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn invalid_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(scenario("converter.json")).unwrap()).unwrap();
    v["schema"] = 7.into();
    std::fs::write(&path, v.to_string()).unwrap();
    let out = deepo().arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
    assert!(!deepo().args(["run", "missing.json"]).output().unwrap().status.success());
}

#[test]
fn accept_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = deepo()
        .args(["accept", "--criterion", "7", "--criterion", "4", "--json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ids: Vec<u64> = report["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [4, 7]);
    assert!(dir.path().join("acceptance.json").exists());
    assert!(!dir.path().join("acceptance.csv").exists());
}

#[test]
fn accept_exits_nonzero_on_failure() {
    let out = deepo().args(["accept", "--criterion", "8"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    let passed = text.contains("[PASS]  8");
    assert_eq!(out.status.success(), passed, "{text}");
}
