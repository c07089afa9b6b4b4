use std::fs;
use std::path::PathBuf;

use serde::Deserialize;

use polfront_core::evaluation::evaluate_policy;
use polfront_core::experiment::{
    run_defer_sweep, run_frontier, run_synth_gen, run_train, write_defer_csv, MethodKind,
};
use polfront_core::saved::SavedPolicy;
use polfront_core::seed::derive_seed;
use polfront_core::{load_cohort, write_cohort, Cohort, Error};

use crate::error::{CliError, Context};
use crate::run::{load_config, require_file, Run};
use crate::Common;

fn cohort(run: &Run, path: &Option<PathBuf>, what: &str) -> Result<Cohort, CliError> {
    let p = require_file(path, what)?;
    load_cohort(&p, &run.config.actions).context(&format!("{what} cohort {}", p.display()))
}

pub fn synth_gen(common: &Common) -> Result<PathBuf, CliError> {
    let cfg = load_config(common)?;
    let synth = cfg
        .synth
        .clone()
        .ok_or_else(|| CliError::Usage("config has no `synth` section".into()))?;
    let run = Run::start("synth-gen", cfg)?;
    let (cohort, probe) = run_synth_gen(&synth, run.config.seed).context("synth-gen")?;
    cohort.check_actions(&run.config.actions).context("synth-gen")?;
    run.write_csv("cohort.csv", |buf| write_cohort(buf, &cohort))?;
    let sidecar = serde_json::json!({ "synth": synth, "seed": run.config.seed, "n": cohort.n(), "probe": probe });
    run.write_json("cohort.meta.json", "generator", &sidecar)?;
    Ok(run.dir)
}

pub fn train(common: &Common) -> Result<PathBuf, CliError> {
    let cfg = load_config(common)?;
    let target = cfg
        .train_target
        .ok_or_else(|| CliError::Usage("config has no `train_target`".into()))?;
    require_file(&cfg.train, "train")?;
    let run = Run::start("train", cfg)?;
    let train = cohort(&run, &run.config.train, "train")?;
    let policy = run_train(&run.config, &train, target).context("train")?;
    run.write_json("policy.json", "policy", &policy)?;
    Ok(run.dir)
}

#[derive(Deserialize)]
struct PolicyFile {
    policy: SavedPolicy,
}

pub fn load_policy(path: &PathBuf) -> Result<SavedPolicy, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Core {
        context: format!("policy {}", path.display()),
        source: Error::Io(e),
    })?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(|e| CliError::Core {
        context: format!("policy {}", path.display()),
        source: Error::Json(e),
    })?;
    Ok(file.policy)
}

pub fn eval(common: &Common, policy: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let mut cfg = load_config(common)?;
    if policy.is_some() {
        cfg.policy = policy;
    }
    let policy_path = require_file(&cfg.policy, "policy")?;
    require_file(&cfg.test, "test")?;
    let policy = load_policy(&policy_path)?;
    if policy.actions().labels() != cfg.actions.labels() {
        return Err(CliError::Core {
            context: "eval".into(),
            source: Error::Schema(format!(
                "policy actions {:?} differ from cohort actions {:?}",
                policy.actions().labels(),
                cfg.actions.labels()
            )),
        });
    }
    let run = Run::start("eval", cfg)?;
    let test = cohort(&run, &run.config.test, "test")?;
    let seed = derive_seed(run.config.seed, "bootstrap", 0);
    let eval = evaluate_policy(&policy, &test, &run.config.actions, run.config.n_bootstrap, seed).context("eval")?;
    run.write_json("eval.json", "eval", &eval)?;
    Ok(run.dir)
}

fn frontier_like(common: &Common, command: &str, only: Option<MethodKind>) -> Result<PathBuf, CliError> {
    let mut cfg = load_config(common)?;
    if let Some(m) = only {
        cfg.methods = vec![m];
    }
    require_file(&cfg.train, "train")?;
    require_file(&cfg.test, "test")?;
    let run = Run::start(command, cfg)?;
    let train = cohort(&run, &run.config.train, "train")?;
    let test = cohort(&run, &run.config.test, "test")?;
    let out = run_frontier(&run.config, &train, &test).context(command)?;
    run.write_csv(&format!("{command}.csv"), |buf| out.report.write_csv(buf))?;
    run.write_json(&format!("{command}.json"), "frontier", &out.report)?;
    let dir = run.dir.join("policies");
    fs::create_dir(&dir)?;
    for (handle, policy) in &out.policies {
        let obj = serde_json::json!({ "config_hash": run.hash, "policy": policy });
        fs::write(
            dir.join(format!("{handle}.json")),
            serde_json::to_string_pretty(&obj).expect("policy serializes"),
        )?;
    }
    Ok(run.dir)
}

pub fn frontier(common: &Common) -> Result<PathBuf, CliError> {
    frontier_like(common, "frontier", None)
}

pub fn baseline(common: &Common) -> Result<PathBuf, CliError> {
    frontier_like(common, "baseline", Some(MethodKind::Baseline))
}

pub fn defer_sweep(common: &Common) -> Result<PathBuf, CliError> {
    let cfg = load_config(common)?;
    require_file(&cfg.train, "train")?;
    require_file(&cfg.test, "test")?;
    let run = Run::start("defer-sweep", cfg)?;
    let train = cohort(&run, &run.config.train, "train")?;
    let test = cohort(&run, &run.config.test, "test")?;
    if train.doctor_action().is_none() || test.doctor_action().is_none() {
        return Err(CliError::Core {
            context: "defer-sweep".into(),
            source: Error::Config("doctor_action column required in train and test cohorts".into()),
        });
    }
    let rows = run_defer_sweep(&run.config, &train, &test).context("defer-sweep")?;
    run.write_csv("defer_sweep.csv", |buf| write_defer_csv(&rows, buf))?;
    run.write_json("defer_sweep.json", "rows", &rows)?;
    Ok(run.dir)
}
