//! Per-run record of stage inputs, outputs and seeds, and the staleness
//! check that runs before every stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Digest of the stage's configuration section and seed.
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    /// File key → hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_ms: u64,
}

/// The manifest of one output directory. File keys are paths relative to
/// the output directory, or absolute for files outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Digest of the most recent effective configuration.
    pub config_digest: String,
    /// Latest record of each stage, in the order the stages last ran.
    pub stages: Vec<StageRecord>,
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Key under which `path` is recorded for output directory `out`.
pub fn file_key(out: &Path, path: &Path) -> String {
    match path.strip_prefix(out) {
        Ok(rel) => rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/"),
        Err(_) => std::path::absolute(path)
            .unwrap_or_else(|_| path.to_path_buf())
            .display()
            .to_string(),
    }
}

fn key_path(out: &Path, key: &str) -> PathBuf {
    let p = Path::new(key);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

impl RunManifest {
    pub fn new(config_digest: String) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest,
            stages: Vec::new(),
        }
    }

    /// Loads the manifest of `out`, or starts an empty one.
    pub fn load_or_new(out: &Path, config_digest: &str) -> Result<Self, CliError> {
        let p = out.join(MANIFEST_FILE);
        let mut m = if p.is_file() {
            let text = fs::read_to_string(&p)
                .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?
        } else {
            Self::new(String::new())
        };
        m.config_digest = config_digest.to_string();
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        Ok(m)
    }

    pub fn save(&self, out: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::create_dir_all(out)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
        let p = out.join(MANIFEST_FILE);
        fs::write(&p, text)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", p.display())))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// The stage whose latest run wrote `key`.
    pub fn producer(&self, key: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.outputs.contains_key(key))
    }

    /// Replaces any earlier record of the same stage.
    pub fn record(&mut self, record: StageRecord) {
        self.stages.retain(|s| s.stage != record.stage);
        self.stages.push(record);
    }

    /// Refuses to proceed when an input is missing, was modified after
    /// the stage that wrote it, or was written by a stage whose own inputs
    /// have since changed. `expected` names the stage that writes default
    /// inputs, for the error message.
    pub fn check_inputs(
        &self,
        out: &Path,
        inputs: &[PathBuf],
        expected: impl Fn(&str) -> Option<&'static str>,
    ) -> Result<(), CliError> {
        let mut visited = BTreeSet::new();
        for p in inputs {
            let key = file_key(out, p);
            if !p.is_file() {
                let stage = self
                    .producer(&key)
                    .map(|s| s.stage.clone())
                    .or(expected(&key).map(String::from));
                return Err(CliError::validation(match stage {
                    Some(s) => format!("missing input {key}; run `drugnet {s}` first"),
                    None => format!("missing input {}", p.display()),
                }));
            }
            self.check_key(out, &key, &mut visited)?;
        }
        Ok(())
    }

    fn check_key(
        &self,
        out: &Path,
        key: &str,
        visited: &mut BTreeSet<String>,
    ) -> Result<(), CliError> {
        let Some(prod) = self.producer(key) else {
            return Ok(());
        };
        let now = file_digest(&key_path(out, key))?;
        if prod.outputs[key] != now {
            return Err(CliError::validation(format!(
                "{key} changed after stage `{}` wrote it; re-run `drugnet {}`",
                prod.stage, prod.stage
            )));
        }
        if !visited.insert(prod.stage.clone()) {
            return Ok(());
        }
        for (k, recorded) in &prod.inputs {
            let p = key_path(out, k);
            let current = if p.is_file() {
                Some(file_digest(&p)?)
            } else {
                None
            };
            if current.as_deref() != Some(recorded.as_str()) {
                return Err(CliError::validation(format!(
                    "stage `{}` is stale: its input {k} changed; re-run `drugnet {}`",
                    prod.stage, prod.stage
                )));
            }
            self.check_key(out, k, visited)?;
        }
        Ok(())
    }
}
