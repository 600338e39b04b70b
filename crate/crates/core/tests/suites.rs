use std::path::PathBuf;

use prodint::composition::CheckStatus;
use prodint::suite::{run_suite, ReportFormat, SuiteName, SuiteSettings};
use prodint::LieContext;

fn contexts_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../contexts")
}

#[test]
fn shipped_context_files_match_builtins() {
    for name in LieContext::BUILTIN_NAMES {
        let loaded = LieContext::load(contexts_dir().join(format!("{name}.json"))).unwrap();
        let builtin = LieContext::builtin(name).unwrap();
        assert_eq!(loaded.to_file(), builtin.to_file(), "{name}");
    }
}

#[test]
fn heisenberg_suites_pass_and_are_reproducible() {
    let h = LieContext::heisenberg();
    let settings = SuiteSettings::new(5);
    let a = run_suite(&h, SuiteName::All, &settings).unwrap();
    assert!(a.passed(), "{:#?}", a.failures().collect::<Vec<_>>());
    assert!(a.notes.is_empty(), "{:?}", a.notes);
    let b = run_suite(&h, SuiteName::All, &settings).unwrap();
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    a.write_rows(&mut ra, ReportFormat::Csv).unwrap();
    b.write_rows(&mut rb, ReportFormat::Csv).unwrap();
    assert_eq!(ra, rb);
    assert!(a.rows.iter().all(|r| !r.anchor.is_empty()));
}

#[test]
fn violated_sup_precondition_is_skipped_not_failed() {
    let so3 = LieContext::so3();
    let r = run_suite(&so3, SuiteName::Composition, &SuiteSettings::new(1)).unwrap();
    let row = r.rows.iter().find(|r| r.check_id == "chi-sup-bound-precondition").unwrap();
    assert_eq!(row.pass, CheckStatus::PreconditionSkipped);
    assert_eq!(row.measured, 2.0);
    assert!(r.passed());
}

#[test]
fn tolerance_override_reaches_identity_rows() {
    let so3 = LieContext::so3();
    let strict = SuiteSettings {
        seed: 3,
        tol: Some(1e-30),
    };
    let r = run_suite(&so3, SuiteName::Identities, &strict).unwrap();
    assert!(r.rows.iter().all(|row| row.bound == 1e-30));
    assert!(!r.passed());
}

#[test]
fn different_seeds_change_measurements() {
    let so3 = LieContext::so3();
    let a = run_suite(&so3, SuiteName::Identities, &SuiteSettings::new(1)).unwrap();
    let b = run_suite(&so3, SuiteName::Identities, &SuiteSettings::new(2)).unwrap();
    assert_ne!(a.rows[0].measured, b.rows[0].measured);
}
