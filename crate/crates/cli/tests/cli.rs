use std::path::Path;
use std::process::{Command, Output};

fn shipexp(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shipexp"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn pipeline_twice_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = shipexp(d.path(), &["pipeline", "--seed", "5"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.json", "plan.json", "replay.csv", "estimate.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn validate_reads_pipeline_estimate() {
    let d = tempfile::tempdir().unwrap();
    assert!(shipexp(d.path(), &["pipeline"]).status.success());
    let est = d.path().join("estimate.json");
    let o = shipexp(d.path(), &["validate", "--estimate", est.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("validation.json")).unwrap()).unwrap();
    assert!(v["norm"].as_f64().unwrap().is_finite());
}

#[test]
fn montecarlo_writes_raw_and_plot_data() {
    let d = tempfile::tempdir().unwrap();
    let o = shipexp(d.path(), &["montecarlo", "--runs", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let raw = std::fs::read_to_string(d.path().join("montecarlo.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 8);
    assert!(d.path().join("montecarlo_plot.csv").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("optimized"));
}

#[test]
fn stage_failures_map_to_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = shipexp(d.path(), &["--config", bad.to_str().unwrap(), "summaries"]);
    assert_eq!(o.status.code(), Some(2));

    let blocked = d.path().join("blocked.json");
    std::fs::write(&blocked, r#"{"planner": {"start": [0, 17, 0]}}"#).unwrap();
    let o = shipexp(d.path(), &["--config", blocked.to_str().unwrap(), "plan"]);
    assert_eq!(o.status.code(), Some(7), "{}", String::from_utf8_lossy(&o.stderr));

    let o = shipexp(d.path(), &["validate", "--estimate", "/nonexistent.json"]);
    assert_eq!(o.status.code(), Some(11));
}

#[test]
fn simulate_single_primitive() {
    let d = tempfile::tempdir().unwrap();
    let o = shipexp(d.path(), &["simulate", "--primitive", "6"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(d.path().join("trajectory_6.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert!(!d.path().join("trajectory_5.csv").exists());
    assert_eq!(shipexp(d.path(), &["simulate", "--primitive", "99"]).status.code(), Some(3));
}
