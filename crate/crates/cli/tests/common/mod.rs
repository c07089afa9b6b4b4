#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polfront"))
}

pub fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Runs the binary, asserts success and returns the printed run directory.
pub fn run_ok(args: &[&str]) -> PathBuf {
    let out = run(args);
    assert!(
        out.status.success(),
        "polfront {:?} failed ({:?}): {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

/// Draws train and test cohorts with `synth-gen` into `dir/data` and writes a
/// small experiment config next to them. Returns the config path.
pub fn prepare(dir: &Path, n: usize, extra: serde_json::Value) -> PathBuf {
    let mut gen: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(repo_config("synth_antibiotic.json")).unwrap()).unwrap();
    gen["synth"]["n"] = n.into();
    let gen_path = dir.join("gen.json");
    fs::write(&gen_path, gen.to_string()).unwrap();
    let data = dir.join("data");
    fs::create_dir_all(&data).unwrap();
    let out = dir.join("gen-runs");
    for (name, seed) in [("train.csv", "101"), ("test.csv", "202")] {
        let run = run_ok(&[
            "synth-gen",
            "--config",
            gen_path.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        fs::copy(run.join("cohort.csv"), data.join(name)).unwrap();
    }
    let mut cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(repo_config("experiment.json")).unwrap()).unwrap();
    if let (Some(obj), Some(more)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in more {
            obj.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("experiment.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}
