//! End-to-end runs of the `ppmsearch` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ppmsearch::ScenarioConfig;

const SMALL: [&str; 6] = [
    "experiment.seeds=2",
    "experiment.scenes=1",
    "experiment.budgets=[40,80]",
    "experiment.sweep_budget=60",
    "experiment.ablation_budget=60",
    "experiment.deviation_budget=60",
];

fn ppmsearch(args: &[&str], extra_set: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ppmsearch"));
    cmd.args(args).env_remove("PPMSEARCH_OUT");
    for s in SMALL.iter().chain(extra_set) {
        cmd.args(["--set", s]);
    }
    cmd.output().expect("binary runs")
}

fn run_ok(args: &[&str], extra_set: &[&str]) -> Output {
    let out = ppmsearch(args, extra_set);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn scenario_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.toml")
}

#[test]
fn shipped_scenario_is_the_default() {
    let cfg = ScenarioConfig::load(&scenario_path()).unwrap();
    assert_eq!(cfg, ScenarioConfig::default());
    let out = run_ok(&["validate", "--config", scenario_path().to_str().unwrap()], &[]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

#[test]
fn validate_reports_every_issue() {
    let out = ppmsearch(&["validate"], &["engine.sigma_t=0.0", "optics.alpha=-1.0"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("engine.sigma_t"), "{text}");
    assert!(text.contains("optics.alpha"), "{text}");
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 3\n[engine]\niterations = \"many\"\n").unwrap();
    let out = ppmsearch(&["validate", "--config", path.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    let out = ppmsearch(
        &["curve", "--out", target.to_str().unwrap()],
        &["engine.sigma_t=0.0"],
    );
    assert!(!out.status.success());
    assert!(!target.join("recall_curve.csv").exists());
}

#[test]
fn curve_has_a_row_per_method_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["curve", "--out", dir.path().to_str().unwrap()], &[]);
    let r = rows(&dir.path().join("recall_curve.csv"));
    assert_eq!(r.len(), ScenarioConfig::default().experiment.methods.len() * 2);
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn ablation_has_two_rows_per_preset() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["ablation", "--out", dir.path().to_str().unwrap()], &[]);
    let r = rows(&dir.path().join("ablation.csv"));
    assert_eq!(r.len(), 2 * 3);
    for pair in r.chunks(2) {
        assert_eq!(pair[0][0], pair[1][0]);
        assert_ne!(pair[0][1], pair[1][1]);
    }
}

#[test]
fn sweep_and_deviation_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    run_ok(&["sweep", "--out", d], &[]);
    run_ok(&["deviation", "--out", d], &[]);
    let cfg = ScenarioConfig::default();
    let sweep = rows(&dir.path().join("proportion_sweep.csv"));
    assert_eq!(
        sweep.len(),
        cfg.experiment.proportions.len() * cfg.experiment.sweep_methods.len()
    );
    let dev = rows(&dir.path().join("deviation.csv"));
    assert_eq!(dev.len(), 2 * cfg.scene.objects.count);
}

#[test]
fn trial_writes_all_logs_and_honors_env_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ppmsearch"))
        .args(["trial", "--budget", "60", "--method", "ppm_ps", "--seed", "4"])
        .env("PPMSEARCH_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "config.toml",
        "trial.csv",
        "objects.csv",
        "scan_log.csv",
        "detections.csv",
        "refinement.csv",
        "particles.csv",
        "ppm.csv",
        "events.log",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let scans = rows(&dir.path().join("scan_log.csv"));
    let trial = rows(&dir.path().join("trial.csv"));
    assert_eq!(trial.len(), 1);
    assert!(!scans.is_empty());
}

#[test]
fn results_do_not_depend_on_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_ok(
        &["curve", "--jobs", "1", "--out", a.path().to_str().unwrap()],
        &[],
    );
    run_ok(
        &["curve", "--jobs", "4", "--out", b.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(
        fs::read(a.path().join("recall_curve.csv")).unwrap(),
        fs::read(b.path().join("recall_curve.csv")).unwrap()
    );
}

#[test]
fn seed_changes_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_ok(
        &["trial", "--seed", "1", "--out", a.path().to_str().unwrap()],
        &[],
    );
    run_ok(
        &["trial", "--seed", "2", "--out", b.path().to_str().unwrap()],
        &[],
    );
    assert_ne!(
        fs::read(a.path().join("scan_log.csv")).unwrap(),
        fs::read(b.path().join("scan_log.csv")).unwrap()
    );
}
