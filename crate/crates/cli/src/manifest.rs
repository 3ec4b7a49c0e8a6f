//! Run manifests: enough to reproduce every artifact of a command.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub preset: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

impl Manifest {
    pub fn new(command: &str, preset: &str, seed: u64, config_text: &str) -> Self {
        Self {
            command: command.to_string(),
            preset: preset.to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Hashes every listed output in `dir` and writes `manifest.toml` there.
    pub fn write(mut self, dir: &Path, outputs: &[String], wall_time_s: f64) -> Result<()> {
        for name in outputs {
            self.outputs.insert(name.clone(), file_sha256(&dir.join(name))?);
        }
        self.wall_time_s = wall_time_s;
        std::fs::write(dir.join("manifest.toml"), toml::to_string(&self)?)?;
        Ok(())
    }
}
