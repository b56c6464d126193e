//! Run manifests and file digests.
//!
//! Every run directory gets a machine-readable manifest: the fully resolved
//! configuration, seeds, input-file digests and an environment descriptor,
//! enough to reproduce the run bit-for-bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::Result;

pub const MANIFEST_VERSION: u32 = 1;

/// Path plus SHA-256 of a data file at the time it was read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// SHA-256 of a file's bytes as lowercase hex.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<FileDigest> {
    let path = path.as_ref();
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Reproducibility record written into every run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub package: String,
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub seed: u64,
    /// Fully resolved configuration, defaults made explicit.
    pub config: BTreeMap<String, String>,
    pub data_files: Vec<FileDigest>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        RunManifest {
            version: MANIFEST_VERSION,
            command: command.to_string(),
            package: env!("CARGO_PKG_NAME").to_string(),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            seed,
            config,
            data_files: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn with_data_file(mut self, digest: FileDigest) -> Self {
        self.data_files.push(digest);
        self
    }

    pub fn with_output(mut self, path: impl AsRef<Path>) -> Self {
        self.outputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Checkpoint(format!("serialising manifest: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Checkpoint(format!("corrupt manifest: {e}")))
    }
}
