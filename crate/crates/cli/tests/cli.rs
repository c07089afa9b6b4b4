mod common;

use std::fs;

use common::{prepare, run, run_ok};
use polfront_core::evaluation::evaluate_policy;
use polfront_core::experiment::ExperimentConfig;
use polfront_core::saved::SavedPolicy;
use polfront_core::seed::derive_seed;
use polfront_core::load_cohort;

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frontier", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frontier"]).status.code(), Some(1));
    assert_eq!(run(&["frontier", "--config", "/nonexistent/cfg.json"]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
}

#[test]
fn synth_gen_is_reproducible_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::repo_config("synth_antibiotic.json");
    let out = dir.path().join("runs");
    let a = run_ok(&["synth-gen", "--config", s(&cfg), "--seed", "4", "--out", s(&out)]);
    let b = run_ok(&["synth-gen", "--config", s(&cfg), "--seed", "4", "--out", s(&out)]);
    let c = run_ok(&["synth-gen", "--config", s(&cfg), "--seed", "5", "--out", s(&out)]);
    assert_ne!(a, b);
    let (ca, cb, cc) = (
        fs::read_to_string(a.join("cohort.csv")).unwrap(),
        fs::read_to_string(b.join("cohort.csv")).unwrap(),
        fs::read_to_string(c.join("cohort.csv")).unwrap(),
    );
    assert_eq!(ca, cb);
    assert_ne!(ca, cc);
    assert!(ca.starts_with("# config_hash="));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap();
    assert_eq!(ca.lines().next().unwrap(), format!("# config_hash={hash}"));
    assert_eq!(manifest["seed"], 4);
}

#[test]
fn train_then_eval_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = prepare(dir.path(), 600, serde_json::json!({}));
    let out = dir.path().join("runs");
    let trained = run_ok(&["train", "--config", s(&cfg_path), "--out", s(&out)]);
    let policy_path = trained.join("policy.json");
    let evaluated = run_ok(&[
        "eval",
        "--config",
        s(&cfg_path),
        "--policy",
        s(&policy_path),
        "--out",
        s(&out),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(evaluated.join("eval.json")).unwrap()).unwrap();

    let cfg = ExperimentConfig::from_json(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    let file: serde_json::Value = serde_json::from_str(&fs::read_to_string(&policy_path).unwrap()).unwrap();
    let policy: SavedPolicy = serde_json::from_value(file["policy"].clone()).unwrap();
    let test = load_cohort(dir.path().join("data/test.csv"), &cfg.actions).unwrap();
    let eval = evaluate_policy(&policy, &test, &cfg.actions, cfg.n_bootstrap, derive_seed(cfg.seed, "bootstrap", 0))
        .unwrap();
    assert_eq!(report["eval"]["iat_rate"].as_f64().unwrap(), eval.iat_rate);
    assert_eq!(report["eval"]["cost_rate"].as_f64().unwrap(), eval.cost_rate);
}

#[test]
fn eval_rejects_mismatched_actions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = prepare(dir.path(), 400, serde_json::json!({}));
    let out = dir.path().join("runs");
    let trained = run_ok(&["train", "--config", s(&cfg_path), "--out", s(&out)]);
    let mut file: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(trained.join("policy.json")).unwrap()).unwrap();
    file["policy"]["actions"]["actions"][1]["label"] = "TMP".into();
    let bad = dir.path().join("bad_policy.json");
    fs::write(&bad, file.to_string()).unwrap();
    let res = run(&["eval", "--config", s(&cfg_path), "--policy", s(&bad), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("differ"));
}

#[test]
fn frontier_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = prepare(dir.path(), 800, serde_json::json!({ "methods": ["reward-max", "baseline"] }));
    let out = dir.path().join("runs");
    let run_dir = run_ok(&["frontier", "--config", s(&cfg_path), "--out", s(&out)]);
    let csv = fs::read_to_string(run_dir.join("frontier.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "method,param,iat,iat_sd,cost,cost_sd,defer_rate,dominated");
    let rows: Vec<&str> = lines.collect();
    // four omega values, two baselines, one clinician
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().any(|r| r.starts_with("doctor,")));
    assert!(rows.iter().all(|r| !r.starts_with("direct,") && !r.starts_with("thresholding,")));
    assert_eq!(fs::read_dir(run_dir.join("policies")).unwrap().count(), 6);
}

#[test]
fn defer_sweep_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = prepare(dir.path(), 500, serde_json::json!({ "lambda_grid": [0.0, 0.05, 0.1] }));
    let out = dir.path().join("runs");
    let run_dir = run_ok(&["defer-sweep", "--config", s(&cfg_path), "--out", s(&out)]);
    let csv = fs::read_to_string(run_dir.join("defer_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 3);
    assert!(csv.lines().nth(2).unwrap().starts_with("0,1,0,0,"));

    let single = dir.path().join("single.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    v["lambda_grid"] = serde_json::json!([0.0]);
    fs::write(&single, v.to_string()).unwrap();
    let run_dir = run_ok(&["defer-sweep", "--config", s(&single), "--out", s(&out)]);
    assert_eq!(fs::read_to_string(run_dir.join("defer_sweep.csv")).unwrap().lines().count(), 3);
}

#[test]
fn empty_method_list_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = prepare(dir.path(), 200, serde_json::json!({ "methods": [] }));
    let res = run(&["frontier", "--config", s(&cfg_path), "--out", s(&dir.path().join("runs"))]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn missing_cohort_file_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = prepare(dir.path(), 200, serde_json::json!({ "test": "data/missing.csv" }));
    let res = run(&["frontier", "--config", s(&cfg_path), "--out", s(&dir.path().join("runs"))]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn malformed_cohort_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = prepare(dir.path(), 200, serde_json::json!({}));
    fs::write(dir.path().join("data/test.csv"), "id,x1,y_NIT\nu0,1.0,1\n").unwrap();
    let res = run(&["frontier", "--config", s(&cfg_path), "--out", s(&dir.path().join("runs"))]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}
