//! Run manifest: configuration hash and per-stage checksums.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    /// Input file name to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    Ok(hex(&Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            stages: BTreeMap::new(),
        }
    }

    /// The manifest at `path` if it belongs to the same configuration,
    /// otherwise a fresh one.
    pub fn open(path: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
                if m.config_hash == cfg.hash() {
                    return Ok(m);
                }
            }
        }
        Ok(Self::new(cfg))
    }

    pub fn record(&mut self, dir: &Path, stage: &str, inputs: &[String], outputs: &[String], seconds: f64) -> Result<(), CliError> {
        let sums = |names: &[String]| -> Result<BTreeMap<String, String>, CliError> {
            names
                .iter()
                .map(|n| {
                    let p = dir.join(n);
                    let p = if p.exists() { p } else { Path::new(n).to_path_buf() };
                    Ok((n.clone(), sha256_file(&p)?))
                })
                .collect()
        };
        let entry = StageEntry { inputs: sums(inputs)?, outputs: sums(outputs)?, seconds };
        self.stages.insert(stage.to_string(), entry);
        Ok(())
    }

    /// Stages whose recorded inputs no longer match the outputs recorded by
    /// the stage that produced them.
    pub fn drift(&self) -> Vec<String> {
        let produced: BTreeMap<&str, &str> = self
            .stages
            .values()
            .flat_map(|s| s.outputs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .collect();
        self.stages
            .iter()
            .filter(|(_, s)| s.inputs.iter().any(|(k, v)| produced.get(k.as_str()).is_some_and(|p| p != v)))
            .map(|(name, _)| name.clone())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(path, text).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
    }
}
