use std::fs;
use std::path::Path;

use lbm_carleman::harness::{run, Experiment, ExperimentConfig, Manifest};

fn small_error_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Experiment::CarlemanError);
    cfg.dims = vec![1];
    cfg.re = vec![10.0];
    cfg.nc = vec![1, 2];
    cfg
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("lbm-carleman-harness-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn artifact_bytes(dir: &Path, m: &Manifest) -> Vec<(String, Vec<u8>)> {
    m.outputs.iter().map(|f| (f.path.clone(), fs::read(dir.join(&f.path)).unwrap())).collect()
}

#[test]
fn rerun_reuses_points_and_reproduces_bytes() {
    let dir = scratch("rerun");
    let cfg = small_error_config();
    let first = run(&cfg, &dir).unwrap();
    assert_eq!(first.exit_code(), 0);
    assert_eq!(first.points_reused, 0);
    let bytes = artifact_bytes(&dir, &first);
    let second = run(&cfg, &dir).unwrap();
    assert_eq!(second.points_reused, second.points_total);
    assert_eq!(artifact_bytes(&dir, &second), bytes);
    assert_eq!(first.outputs, second.outputs);
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config_sha256, cfg.content_hash());
}

#[test]
fn worker_count_does_not_change_outputs() {
    let cfg = small_error_config();
    let (a, b) = (scratch("w1"), scratch("w2"));
    let m1 = run(&cfg, &a).unwrap();
    let mut par = cfg.clone();
    par.workers = 2;
    let m2 = run(&par, &b).unwrap();
    assert_eq!(m1.outputs, m2.outputs);
}

#[test]
fn capacity_failures_are_recorded_per_point() {
    let dir = scratch("capacity");
    let mut cfg = small_error_config();
    // d = 18, so N_C = 1 needs 144 bytes and N_C = 2 needs 2736.
    cfg.max_mem = 1000;
    let m = run(&cfg, &dir).unwrap();
    assert_eq!(m.points_total, 2);
    assert_eq!(m.failures.len(), 1);
    assert_eq!(m.exit_code(), 3);
    assert!(m.failures[0].message.contains("Re=10, N_C=2"));
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn params_table_is_deterministic() {
    let cfg = ExperimentConfig::new(Experiment::ParamsTable);
    let (a, b) = (scratch("p1"), scratch("p2"));
    let m1 = run(&cfg, &a).unwrap();
    let m2 = run(&cfg, &b).unwrap();
    assert_eq!(m1.outputs, m2.outputs);
    let csv = fs::read_to_string(a.join("params.csv")).unwrap();
    assert!(csv.lines().count() > 13);
    assert!(!csv.contains('\r'));
}

#[test]
fn bad_configs_are_rejected() {
    let cases = [
        r#"{"experiment":"carleman-error","bogus":1}"#,
        r#"{"experiment":"carleman-error","dims":[4]}"#,
        r#"{"experiment":"carleman-error","nc":[0]}"#,
        r#"{"experiment":"cost-report","c":1.0}"#,
        r#"{"experiment":"gate-budget","epsilon":[2.0]}"#,
        r#"{"experiment":"condition-scaling","workers":0}"#,
        r#"{"experiment":"no-such-experiment"}"#,
    ];
    for text in cases {
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{text}");
    }
}

#[test]
fn experiment_names_round_trip() {
    for e in Experiment::ALL {
        assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        let cfg = ExperimentConfig::from_json(&format!(r#"{{"experiment":"{}"}}"#, e.name())).unwrap();
        assert_eq!(cfg, ExperimentConfig::new(e));
    }
}
