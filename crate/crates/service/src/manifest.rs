//! Run manifests written next to every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::JobConfig;
use crate::error::ServiceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    /// Command-line arguments beyond the config.
    pub args: BTreeMap<String, String>,
    /// Output file name -> SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "hed-service".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
        ("hed-core".to_string(), hed_core::VERSION.to_string()),
    ])
}

pub fn file_sha256(path: &Path) -> Result<String, ServiceError> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl RunManifest {
    pub fn new(command: &str, config: &JobConfig) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            versions: versions(),
            args: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn arg(mut self, key: &str, value: impl ToString) -> Self {
        self.args.insert(key.to_string(), value.to_string());
        self
    }

    pub fn record(&mut self, path: &Path) -> Result<(), ServiceError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.insert(name, file_sha256(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<PathBuf, ServiceError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(path.to_path_buf())
    }
}
