//! Reproducibility record written next to every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tkg_core::config::RunConfig;

pub const DATASET_FILES: [&str; 5] = ["entity2id.txt", "relation2id.txt", "train.txt", "valid.txt", "test.txt"];

/// SHA-256 over the dataset files, each prefixed by its name and length.
pub fn dataset_checksum(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in DATASET_FILES {
        let bytes = fs::read(dir.join(name)).with_context(|| format!("reading {}", dir.join(name).display()))?;
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub variant: String,
    pub config: String,
    pub data_dir: Option<PathBuf>,
    pub dataset_sha256: Option<String>,
    pub rules_sha256: Option<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            variant: config.variant.to_string(),
            config: config.to_text(),
            data_dir: config.data_dir.clone(),
            dataset_sha256: None,
            rules_sha256: None,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.write_to(&dir.join("manifest.json"))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
