use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn strokeprim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strokeprim"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn trained(dir: &Path) {
    ok(&strokeprim(&["gen-demos", "--out-dir", "demos", "--n", "10"], dir));
    ok(&strokeprim(&["train", "--demos", "demos", "--out", "params.json"], dir));
}

#[test]
fn train_is_reproducible_and_reconstructs_demos() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&strokeprim(&["gen-demos", "--out-dir", "demos", "--n", "10"], dir));
    let first = ok(&strokeprim(&["train", "--demos", "demos", "--out", "a.json"], dir));
    let second = ok(&strokeprim(&["train", "--demos", "demos", "--out", "b.json"], dir));
    assert_eq!(fs::read(dir.join("a.json")).unwrap(), fs::read(dir.join("b.json")).unwrap());
    let rmse: Vec<f64> = first
        .lines()
        .filter_map(|l| l.split("rmse ").nth(1))
        .map(|v| v.trim().parse().unwrap())
        .collect();
    assert_eq!(rmse.len(), 10);
    assert!(rmse.iter().all(|&r| r < 0.05), "{rmse:?}");
    assert_eq!(first.replace("a.json", ""), second.replace("b.json", ""));
}

#[test]
fn train_needs_two_demos() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&strokeprim(&["gen-demos", "--out-dir", "demos", "--n", "1"], dir));
    let out = strokeprim(&["train", "--demos", "demos", "--out", "p.json"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2"));
    assert!(!dir.join("p.json").exists());
}

#[test]
fn missing_and_malformed_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = strokeprim(&["simulate", "--params", "absent.json"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    fs::write(dir.join("bad.json"), "{\"schema_version\": 1}").unwrap();
    let out = strokeprim(&["simulate", "--params", "bad.json"], dir);
    assert_eq!(out.status.code(), Some(1));

    fs::write(dir.join("rec.csv"), "D=2,a,b\n0,1\n").unwrap();
    let out = strokeprim(&["segment", "--recording", "rec.csv"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn simulate_is_deterministic_and_writes_episodes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    let args = ["simulate", "--params", "params.json", "--balls", "4", "--seed", "3"];
    let a = ok(&strokeprim(&args, dir));
    let b = ok(&strokeprim(&[&args[..], &["--out-dir", "eps"]].concat(), dir));
    assert_eq!(a, b);
    let report: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(report["metrics"]["n"], 4);
    assert_eq!(report["episodes"].as_array().unwrap().len(), 4);
    for i in 0..4 {
        let csv = fs::read_to_string(dir.join(format!("eps/e{i:03}.csv"))).unwrap();
        assert!(csv.starts_with("D=7,"));
        let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.join(format!("eps/e{i:03}.json"))).unwrap()).unwrap();
        assert_eq!(sidecar["reward"], report["episodes"][i]["reward"]);
    }
}

#[test]
fn segment_reports_the_stroke() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&strokeprim(&["gen-demos", "--out-dir", "demos", "--n", "2"], dir));
    let out = ok(&strokeprim(&["segment", "--recording", "demos/demo_000.csv", "--hit-phase"], dir));
    let v: Value = serde_json::from_str(&out).unwrap();
    let duration = v["duration"].as_f64().unwrap();
    assert!((duration - 0.7).abs() < 0.05, "{duration}");
    let phase = v["hit_phase"].as_f64().unwrap();
    assert!((phase - 0.6).abs() < 0.05, "{phase}");
}

#[test]
fn feedback_file_refinement_matches_the_oracle_round() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    let report = ok(&strokeprim(
        &[
            "refine", "--params", "params.json", "--batch", "6", "--rounds", "2", "--eval-balls", "4",
            "--temperature", "0.5", "--out-dir", "oracle",
        ],
        dir,
    ));
    let report: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["rounds"].as_array().unwrap().len(), 2);
    let written: Value = serde_json::from_str(&fs::read_to_string(dir.join("oracle/report.json")).unwrap()).unwrap();
    assert_eq!(written, report);

    let summary = ok(&strokeprim(
        &[
            "refine", "--params", "params.json", "--episodes", "oracle/round-1", "--feedback",
            "oracle/round-1/feedback.csv", "--out", "r1.json", "--temperature", "0.5",
        ],
        dir,
    ));
    let summary: Value = serde_json::from_str(&summary).unwrap();
    let used = summary["used"].as_array().unwrap().len();
    assert_eq!(used as u64, report["rounds"][0]["used"].as_u64().unwrap());
    assert_eq!(
        fs::read(dir.join("r1.json")).unwrap(),
        fs::read(dir.join("oracle/params/round-1.json")).unwrap()
    );

    // Episodes enter in sorted-id order whatever the file order.
    let shuffled: String = fs::read_to_string(dir.join("oracle/round-1/feedback.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("trajectory_id"))
        .rev()
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(dir.join("shuffled.csv"), shuffled).unwrap();
    ok(&strokeprim(
        &[
            "refine", "--params", "params.json", "--episodes", "oracle/round-1", "--feedback", "shuffled.csv",
            "--out", "r1b.json", "--temperature", "0.5",
        ],
        dir,
    ));
    assert_eq!(fs::read(dir.join("r1.json")).unwrap(), fs::read(dir.join("r1b.json")).unwrap());
}

#[test]
fn feedback_for_a_missing_episode_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    fs::create_dir(dir.join("eps")).unwrap();
    fs::write(dir.join("fb.csv"), "trajectory_id,reward\nr1-000,2\n").unwrap();
    let out = strokeprim(
        &["refine", "--params", "params.json", "--episodes", "eps", "--feedback", "fb.csv", "--out", "o.json"],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r1-000"));

    fs::write(dir.join("fb.csv"), "r1-000,0.3\n").unwrap();
    let out = strokeprim(
        &["refine", "--params", "params.json", "--episodes", "eps", "--feedback", "fb.csv", "--out", "o.json"],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
}
