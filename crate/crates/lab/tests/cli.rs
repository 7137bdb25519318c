use std::path::Path;
use std::process::{Command, Output};

use spinglass_lab::exit;
use spinglass_lab::output::ReportFile;

fn spinglass(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinglass"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPINGLASS_WORKERS")
        .env_remove("SPINGLASS_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.into()
}

const CW_SHIFT: &str = "\
[model]
family = cw

[run]
n_grid = 8
beta = 0.5, 1.0, 2.0
master_seed = 7

[identity.classical-shift]
lambdas = 0.1, 1.0
";

#[test]
fn cw_classical_shift_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cw.ini", CW_SHIFT);
    let out = spinglass(&["run", &cfg, "--output-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&out.stderr));
    let report = ReportFile::load(&dir.path().join("out")).unwrap();
    assert_eq!(report.reports.len(), 6);
    assert!(dir.path().join("out/timings.json").exists());
    assert!(dir.path().join("out/identities.csv").exists());
    let again = spinglass(&["report", "out"], dir.path());
    assert_eq!(again.status.code(), Some(exit::OK));
    assert_eq!(again.stdout, out.stdout);
}

#[test]
fn unknown_identity_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.ini", &CW_SHIFT.replace("classical-shift", "no-such-identity"));
    let out = spinglass(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(exit::INVALID_CONFIG));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.ini:9:"), "{err}");
}

#[test]
fn oversized_exact_run_is_a_capacity_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "big.ini",
        "[model]\nfamily = sk\n\n[run]\nn_grid = 30\nbeta = 1.0\nmaster_seed = 1\n\n[identity.zero-beta]\n",
    );
    let out = spinglass(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(exit::CAPACITY));
    assert!(!dir.path().join("spinglass-out").exists());
}

#[test]
fn ultrametricity_beyond_triple_capacity_is_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "um.ini",
        "[model]\nfamily = sk\n\n[run]\nn_grid = 12\nbeta = 1.0\nmaster_seed = 1\n\n[identity.ultrametricity]\n",
    );
    let out = spinglass(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(exit::CAPACITY));
}

#[test]
fn injected_coupling_fault_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let ok = spinglass(&["verify", "--quick", "--output-dir", "ok"], dir.path());
    assert_eq!(ok.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&ok.stderr));
    let bad = spinglass(
        &["verify", "--quick", "--output-dir", "bad", "--inject-coupling-scale", "1.001"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(exit::EXACT_FAILED));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("covariance"));
}

#[test]
fn run_output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "gg.ini",
        "[model]\nfamily = sk\n\n[run]\nn_grid = 4, 5, 6\nbeta = 0.8\nn_samples = 40\nmaster_seed = 3\n\n\
         [identity.gg]\n\n[identity.annealed-bound]\n",
    );
    let a = spinglass(&["run", &cfg, "--workers", "1", "--output-dir", "a"], dir.path());
    let b = spinglass(&["run", &cfg, "--workers", "3", "--output-dir", "b"], dir.path());
    assert!(a.status.success() && b.status.success());
    let ra = std::fs::read(dir.path().join("a/report.json")).unwrap();
    let rb = std::fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(ra, rb);
    let seeded = spinglass(&["run", &cfg, "--seed", "4", "--output-dir", "c"], dir.path());
    assert!(seeded.status.success());
    assert_ne!(ra, std::fs::read(dir.path().join("c/report.json")).unwrap());
}

#[test]
fn output_dir_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cw.ini", CW_SHIFT);
    let out = Command::new(env!("CARGO_BIN_EXE_spinglass"))
        .args(["run", &cfg])
        .current_dir(dir.path())
        .env("SPINGLASS_OUTPUT_DIR", "from-env")
        .env("SPINGLASS_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/report.json").exists());
}

#[test]
fn bad_usage_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinglass(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(exit::INVALID_CONFIG));
}
