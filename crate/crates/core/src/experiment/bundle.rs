use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::{read_json, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the bundle root, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Index of an output bundle. Holds no timestamps so identical runs
/// produce identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub version: String,
    pub files: Vec<FileEntry>,
}

/// Collects the files written by a command.
pub(crate) struct Bundle {
    root: PathBuf,
    files: Vec<String>,
}

fn digest(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl Bundle {
    pub(crate) fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_owned(),
            files: Vec::new(),
        })
    }

    /// Absolute path for `rel`, recorded for the manifest.
    pub(crate) fn file(&mut self, rel: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_owned());
        }
        self.root.join(rel)
    }

    pub(crate) fn finish(
        mut self,
        command: &str,
        seed: u64,
        fingerprint: String,
    ) -> Result<Manifest> {
        self.files.sort();
        let files = self
            .files
            .iter()
            .map(|rel| {
                let (sha256, bytes) = digest(&self.root.join(rel))?;
                Ok(FileEntry {
                    path: rel.clone(),
                    sha256,
                    bytes,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            command: command.to_owned(),
            seed,
            config_fingerprint: fingerprint,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            files,
        };
        write_json(&self.root.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

/// Re-hash every file listed in the bundle's manifest.
pub fn verify_bundle(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let mut problems = Vec::new();
    for entry in &manifest.files {
        let path = dir.join(&entry.path);
        match digest(&path) {
            Ok((sha, bytes)) if sha == entry.sha256 && bytes == entry.bytes => {}
            Ok(_) => problems.push(format!("{}: content changed", entry.path)),
            Err(_) => problems.push(format!("{}: missing or unreadable", entry.path)),
        }
    }
    if problems.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Verification(problems))
    }
}
