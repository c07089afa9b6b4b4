//! Config loading, hashing and run directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use polfront_core::experiment::ExperimentConfig;

use crate::error::{CliError, Context};
use crate::Common;

pub struct Run {
    pub config: ExperimentConfig,
    pub hash: String,
    pub dir: PathBuf,
}

/// Resolves a config-relative path.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(&common.config).map_err(|source| CliError::ConfigFile {
        path: common.config.display().to_string(),
        source,
    })?;
    let mut cfg = ExperimentConfig::from_json(&text).context("config")?;
    let base = common.config.parent().unwrap_or(Path::new("")).to_path_buf();
    for p in [&mut cfg.train, &mut cfg.test, &mut cfg.policy] {
        if let Some(path) = p.as_mut() {
            *path = resolve(&base, path);
        }
    }
    if let Some(out) = cfg.out_dir.as_mut() {
        *out = resolve(&base, out);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate().context("config")?;
    Ok(cfg)
}

/// SHA-256 of the config's JSON with the output directory removed.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = None;
    let json = serde_json::to_vec(&c).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

pub fn require_file(p: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    match p {
        None => Err(CliError::Usage(format!("config has no `{what}` path"))),
        Some(path) if !path.is_file() => Err(CliError::Usage(format!(
            "`{what}` path {} does not exist",
            path.display()
        ))),
        Some(path) => Ok(path.clone()),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    version: &'a str,
    created: String,
    config: &'a ExperimentConfig,
}

impl Run {
    /// Creates `<out>/<timestamp>-<hash8>` (suffixed if taken) and writes the manifest.
    pub fn start(command: &str, config: ExperimentConfig) -> Result<Self, CliError> {
        let hash = config_hash(&config);
        let base = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&base)?;
        let now = chrono::Utc::now();
        let stem = format!("{}-{}-{}", now.format("%Y%m%dT%H%M%S"), command, &hash[..8]);
        let mut dir = base.join(&stem);
        let mut k = 1;
        while dir.exists() {
            dir = base.join(format!("{stem}-{k}"));
            k += 1;
        }
        fs::create_dir(&dir)?;
        let manifest = Manifest {
            command,
            config_hash: &hash,
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION"),
            created: now.to_rfc3339(),
            config: &config,
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(Self { config, hash, dir })
    }

    /// Writes a CSV whose first line is `# config_hash=<hex>`.
    pub fn write_csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> polfront_core::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "# config_hash={}", self.hash)?;
        body(&mut buf).context(name)?;
        let path = self.dir.join(name);
        fs::write(&path, buf)?;
        Ok(path)
    }

    /// Writes `{"config_hash": ..., <key>: value}` as pretty JSON.
    pub fn write_json<T: Serialize>(&self, name: &str, key: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut obj = serde_json::Map::new();
        obj.insert("config_hash".into(), serde_json::Value::String(self.hash.clone()));
        obj.insert(
            key.into(),
            serde_json::to_value(value).map_err(|e| CliError::Usage(e.to_string()))?,
        );
        let path = self.dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(&obj).expect("json value serializes"))?;
        Ok(path)
    }
}
