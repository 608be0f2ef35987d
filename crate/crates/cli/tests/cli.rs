//! End-to-end runs of the `polymerlab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn polymerlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polymerlab")).args(args).output().expect("binary runs")
}

fn run_with(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{command}.cfg"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    polymerlab(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn fgue_table_is_monotone_and_rerun_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_with(dir.path(), "fgue", "t_grid = -2, 0, 2\n", &[]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let path = dir.path().join("out/fgue.csv");
    let bytes = std::fs::read(&path).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert!(text.starts_with("# version: polymerlab v0.1.0\n# config: {"));
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 3);
    assert!(0.0 < values[0] && values[0] < values[1] && values[1] < values[2] && values[2] < 1.0);

    let second = run_with(dir.path(), "fgue", "t_grid = -2, 0, 2\n", &["--workers", "3"]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert!(!dir.path().join("out/fgue.csv.partial").exists());
}

#[test]
fn nonpositive_u_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "laplace", "u = -0.25\nreplicas = 100\n", &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("out/laplace.json").exists());
}

#[test]
fn unknown_keys_and_missing_files_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_with(dir.path(), "diag", "colour = red\n", &[]).status.code(), Some(2));
    let out = polymerlab(&["diag", "--config", dir.path().join("absent.cfg").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn small_n_needs_force_and_then_warns() {
    let dir = tempfile::tempdir().unwrap();
    let config = "n = 4\nt_grid = 1\nreplicas = 2000\n";
    let refused = run_with(dir.path(), "laplace", config, &[]);
    assert_eq!(refused.status.code(), Some(2));

    let forced = run_with(dir.path(), "laplace", config, &["--force"]);
    assert!(matches!(forced.status.code(), Some(0) | Some(4)), "{}", String::from_utf8_lossy(&forced.stderr));
    let report = json(&dir.path().join("out/laplace.json"));
    let warnings = report["results"]["points"][0]["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("below 9")), "{warnings:?}");
    assert_eq!(report["config"]["force"], true);
}

#[test]
fn laplace_report_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "laplace", "t_grid = 2\nreplicas = 5000\n", &["--seed", "11"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("out/laplace.json"));
    assert_eq!(report["version"], "polymerlab v0.1.0");
    assert_eq!(report["command"], "laplace");
    // the flag overrides the default seed
    assert_eq!(report["seeds"]["base_seed"], 11);
    assert_eq!(report["config"]["seed"], 11);
    let point = &report["results"]["points"][0];
    assert!(point["z"].as_f64().unwrap().abs() <= 3.0);
}

#[test]
fn zero_perturbation_leaves_the_ensemble_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "perturb", "n = 16\nreplicas = 500\nperturbation = zero\n", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("out/perturb.json"));
    assert_eq!(report["results"]["points"][0]["ks_two_sample"], 0.0);
    assert!(dir.path().join("out/fgue_reference.csv").exists());
}

#[test]
fn failed_checks_exit_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    // a ceiling nothing can meet
    let out = run_with(dir.path(), "tw", "n = 8, 16\nreplicas = 200\nks_max = 1e-9\n", &[]);
    assert_eq!(out.status.code(), Some(4));
    let report = json(&dir.path().join("out/tw.json"));
    assert_eq!(report["results"]["check"]["passed"], false);
    assert!(dir.path().join("out/tw_h_n16.csv").exists());
}

#[test]
fn convergence_failure_leaves_only_a_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    // two nodes per panel cannot resolve the Airy contours
    let out = run_with(dir.path(), "fgue", "order = 2\n", &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("out/fgue.csv").exists());
    assert!(dir.path().join("out/fgue.csv.partial").exists());
}
