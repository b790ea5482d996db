//! Provenance manifest: one entry per command with input and output hashes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub steps: Vec<Step>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            tool: "latentvar".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            steps: Vec::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Every regular file under `path` (or `path` itself), sorted.
fn files_under(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            out.extend(files_under(&p)?);
        } else if !p.extension().is_some_and(|e| e == "tmp") {
            out.push(p);
        }
    }
    Ok(out)
}

/// Accumulates steps into `<root>/manifest.json`.
pub struct Recorder {
    root: PathBuf,
    manifest: Manifest,
}

impl Recorder {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(FILE_NAME);
        let manifest = if path.exists() {
            latentvar::fsio::read_json(&path).with_context(|| format!("reading {}", path.display()))?
        } else {
            Manifest::default()
        };
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    fn display(&self, p: &Path) -> String {
        let rel = p.strip_prefix(&self.root).unwrap_or(p);
        rel.to_string_lossy().replace('\\', "/")
    }

    fn hashes(&self, paths: &[PathBuf]) -> Result<Vec<FileHash>> {
        let mut out = Vec::new();
        for p in paths {
            for f in files_under(p)? {
                if f == self.root.join(FILE_NAME) {
                    continue;
                }
                let bytes = fs::read(&f).with_context(|| format!("hashing {}", f.display()))?;
                out.push(FileHash {
                    path: self.display(&f),
                    sha256: sha256_hex(&bytes),
                });
            }
        }
        Ok(out)
    }

    /// Add or replace the entry for `command` and rewrite the manifest.
    pub fn record(&mut self, command: &str, seed: u64, config_sha256: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
        let step = Step {
            command: command.to_string(),
            seed,
            config_sha256: config_sha256.to_string(),
            inputs: self.hashes(inputs)?,
            outputs: self.hashes(outputs)?,
        };
        match self.manifest.steps.iter_mut().find(|s| s.command == command) {
            Some(existing) => *existing = step,
            None => self.manifest.steps.push(step),
        }
        latentvar::fsio::write_json(&self.root.join(FILE_NAME), &self.manifest)?;
        Ok(())
    }
}
