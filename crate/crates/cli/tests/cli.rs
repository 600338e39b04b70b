use std::path::PathBuf;
use std::process::{Command, Output};

fn prodint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prodint"))
        .args(args)
        .env_remove("PRODINT_CONTEXT_DIR")
        .output()
        .expect("binary runs")
}

fn contexts_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../contexts")
}

#[test]
fn missing_context_exits_with_status_two() {
    let out = prodint(&["--context", "/definitely/not/here.json", "--suite", "identities", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unknown_suite_and_missing_seed_are_usage_errors() {
    assert_eq!(prodint(&["--context", "so3", "--suite", "bogus", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(prodint(&["--context", "so3", "--suite", "identities"]).status.code(), Some(2));
    assert_eq!(prodint(&["--context", "so3", "--suite", "identities", "--seed", "1", "--tol", "-1"]).status.code(), Some(2));
}

#[test]
fn malformed_context_file_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = prodint(&["--context", path.to_str().unwrap(), "--suite", "identities", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn heisenberg_identities_pass_from_file() {
    let path = contexts_dir().join("heisenberg.json");
    let out = prodint(&["--context", path.to_str().unwrap(), "--suite", "identities", "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("suite,check_id,anchor,n,measured,bound,ratio,pass"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.starts_with("identities,") && r.ends_with(",pass")));
}

#[test]
fn context_directory_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_prodint"))
        .args(["--context", "so3.json", "--suite", "identities", "--seed", "2", "--format", "jsonl"])
        .env("PRODINT_CONTEXT_DIR", contexts_dir())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().all(|l| l.starts_with('{') && l.contains("\"pass\":\"pass\"")));
}

#[test]
fn failing_checks_exit_with_status_one() {
    let out = prodint(&["--context", "so3", "--suite", "identities", "--seed", "1", "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failing checks"));
}

#[test]
fn composition_reports_skipped_precondition_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = prodint(&["--context", "so3", "--suite", "composition", "--seed", "4", "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let row = text.lines().find(|l| l.contains("chi-sup-bound-precondition")).unwrap();
    assert!(row.ends_with(",precondition-skipped"));
}

#[test]
fn side_outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let conv = dir.path().join("conv.csv");
    let wit = dir.path().join("witness.json");
    let out = prodint(&[
        "--context",
        "diag2",
        "--suite",
        "adjoint",
        "--seed",
        "3",
        "--convergence",
        conv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let conv_text = std::fs::read_to_string(&conv).unwrap();
    assert!(conv_text.starts_with("context,curve_id,n,sup_node_error,defect_a,defect_b\n"));
    assert_eq!(conv_text.lines().count(), 5);
    let out = prodint(&["--context", "so3", "--suite", "adjoint", "--seed", "3", "--witness-out", wit.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = prodint(&["--context", "so3", "--suite", "estimates", "--seed", "3", "--witness-out", wit.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let witness = prodint::estimates::EstimateWitness::load(&wit).unwrap();
    assert_eq!(witness.context, "so3");
    assert!(witness.certified);
}
