//! Content-addressed run directories and their manifests.
//!
//! A run directory is named after a hash of the command, the effective
//! configuration and the bytes of every input file, so identical invocations
//! map to the same directory. Existing directories are only replaced with
//! `--force`. The manifest is the only file carrying a timestamp.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct Identity<'a> {
    command: &'a str,
    config: &'a RunConfig,
    inputs: &'a [FileEntry],
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    config_file: &'static str,
    inputs: &'a [FileEntry],
    outputs: Vec<FileEntry>,
    created_at: String,
}

pub struct RunDir {
    pub path: PathBuf,
    command: String,
    hash: String,
    seed: u64,
    inputs: Vec<FileEntry>,
    outputs: Vec<String>,
}

impl RunDir {
    /// Creates `<output_dir>/<command>-<hash>`.
    pub fn create(command: &str, config: &RunConfig, inputs: &[&Path], force: bool) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(FileEntry {
                    path: p.display().to_string(),
                    sha256: file_digest(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        // paths name inputs for humans; only their contents identify the run
        let identity_inputs: Vec<FileEntry> = inputs
            .iter()
            .map(|f| FileEntry { path: String::new(), sha256: f.sha256.clone() })
            .collect();
        let identity = serde_json::to_vec(&Identity {
            command,
            config,
            inputs: &identity_inputs,
        })?;
        let hash = sha256_hex(&identity);
        let path = config.output_dir.join(format!("{command}-{}", &hash[..12]));
        if path.exists() {
            if !force {
                bail!("run directory {} already exists; pass --force to overwrite it", path.display());
            }
            std::fs::remove_dir_all(&path).with_context(|| format!("clearing {}", path.display()))?;
        }
        std::fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut dir = Self {
            path,
            command: command.to_string(),
            hash,
            seed: config.train.seed,
            inputs,
            outputs: Vec::new(),
        };
        if command == "generate" {
            dir.seed = config.data.seed;
        }
        let mut replay = serde_json::to_string_pretty(config)?;
        replay.push('\n');
        dir.write("config.json", replay.as_bytes())?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.file(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(name);
        Ok(path)
    }

    /// Registers a file some other writer already produced.
    pub fn record(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    pub fn finish(self) -> Result<PathBuf> {
        let outputs = self
            .outputs
            .iter()
            .map(|name| {
                Ok(FileEntry {
                    path: name.clone(),
                    sha256: file_digest(&self.file(name))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: "rcad",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config_hash: &self.hash,
            seed: self.seed,
            config_file: "config.json",
            inputs: &self.inputs,
            outputs,
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.file("manifest.json");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.path)
    }
}
