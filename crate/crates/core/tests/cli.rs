use std::fs;

use nq_core::cli::{run, EXIT_CHECK_FAILED, EXIT_IO, EXIT_OK, EXIT_USAGE};

fn nq(args: &str, out: &std::path::Path) -> i32 {
    let argv: Vec<String> = ["nq"]
        .into_iter()
        .chain(args.split_whitespace())
        .chain(["--out", out.to_str().unwrap()])
        .map(String::from)
        .collect();
    run(argv)
}

#[test]
fn coupled_run_writes_empty_violations() {
    let dir = tempfile::tempdir().unwrap();
    let code = nq("couple --lambda1 0.4 --lambda2 0.4 --mu1 1 --mu2 1 --threshold 1 --horizon 2000 --seed 7", dir.path());
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read_to_string(dir.path().join("violations.jsonl")).unwrap(), "");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("time,event_kind,q1_minus"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["violations"], 0);
    assert_eq!(summary["config"]["master_seed"], 7);
}

#[test]
fn negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let code = nq(
        "couple --lambda1 0.8 --lambda2 0.6 --mu1 1 --mu2 1 --threshold 1 --horizon 2000 --negative-control",
        dir.path(),
    );
    assert_eq!(code, EXIT_CHECK_FAILED);
    assert!(!fs::read_to_string(dir.path().join("violations.jsonl")).unwrap().is_empty());
}

#[test]
fn replay_reports_confirmed_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nq("replay-table1", dir.path()), EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("replay.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "confirmed-counterexample");
    assert_eq!(report["q2_violation_intervals"], serde_json::json!([[3.0, 5.0]]));
    let jobs = fs::read_to_string(dir.path().join("jobs.csv")).unwrap();
    assert!(jobs.lines().any(|l| l == "ub,3,2,2,3,1,10"));
}

#[test]
fn scripted_replay_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.txt");
    fs::write(
        &script,
        "# built-in script with both thresholds removed\nhorizon = 12\n[arrivals]\n0 1\n1 2\n2 2\n[z1]\n10\n[z2]\n5 6\n[thresholds]\nt1 = 0\nt2 = 0\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(nq(&format!("replay-table1 --config {}", script.display()), &out), EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("replay.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "no-violation");
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.txt");
    fs::write(&file, "lambda1 = 0.3\nhorizon = 500\nseed = 11\n").unwrap();
    let out = dir.path().join("out");
    let code = nq(
        &format!("couple --lambda1 0.9 --lambda2 0.4 --mu1 1 --mu2 1 --threshold 1 --config {}", file.display()),
        &out,
    );
    assert_eq!(code, EXIT_OK);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["lambda1"], 0.3);
    assert_eq!(summary["config"]["horizon"], 500.0);
    assert_eq!(summary["config"]["master_seed"], 11);
}

#[test]
fn usage_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nq("couple --lambda2 0.4 --mu1 1 --mu2 1 --threshold 1", dir.path()), EXIT_USAGE);
    assert_eq!(
        nq("simulate --model x --threshold 1 --lambda1 1 --lambda2 1 --mu1 1 --mu2 1", dir.path()),
        EXIT_USAGE
    );
    assert_eq!(nq("couple --no-such-flag", dir.path()), EXIT_USAGE);
    assert_eq!(nq("couple --lambda1 0 --lambda2 0.4 --mu1 1 --mu2 1 --threshold 1", dir.path()), EXIT_USAGE);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let code = nq("couple --lambda1 0.4 --lambda2 0.4 --mu1 1 --mu2 1 --threshold 1 --horizon 10", &blocker.join("sub"));
    assert_eq!(code, EXIT_IO);
}

#[test]
fn sweep_drops_boundary_points() {
    let dir = tempfile::tempdir().unwrap();
    let code = nq("sweep --grid 0.5:1.5:0.5 --mu1 1 --mu2 1 --thresholds 1 --horizon 2000", dir.path());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    // (0.5, 1.5), (1, 1), (1.5, 0.5) lie on lambda1 + lambda2 = 2; (0.5, 1), (1.5, 1) on lambda2 = 1.
    assert_eq!(summary["dropped_points"].as_array().unwrap().len(), 5);
    let rows = fs::read_to_string(dir.path().join("sweep.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 4);
    assert!(code == EXIT_OK || code == EXIT_CHECK_FAILED);
}
