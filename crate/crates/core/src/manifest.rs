//! Run provenance. Every command that writes an output directory also
//! writes a `manifest.json` recording the subcommand, tool version, master
//! seed, effective configuration, and SHA-256 digests of all file inputs.
//! Manifests deliberately carry no timestamps or host information so that
//! reruns with identical inputs produce byte-identical output trees.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub inputs: Vec<InputDigest>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config: serde_json::Value) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            inputs: Vec::new(),
            config,
        }
    }

    /// Record an input file's digest. Inputs are kept sorted by path so the
    /// serialized manifest does not depend on registration order.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.push(InputDigest { path: path.to_path_buf(), sha256: digest });
        self.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
        std::fs::write(&path, json + "\n")
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }
}

/// Hex-encoded SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
