use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use capgap_core::util;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the manifest's directory when the file lives under it.
    pub path: String,
    pub sha256: String,
}

/// Written beside every run's outputs. `config_digest`, `inputs` and
/// `outputs` depend only on inputs, seed and effective configuration; the
/// thread count and timestamp are recorded but not digested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config: serde_json::Value,
    pub config_digest: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub timestamp_unix: u64,
}

pub struct Recorder {
    command: String,
    seed: u64,
    threads: Option<usize>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn display_path(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

fn hashes(paths: &[PathBuf], base: &Path) -> Result<Vec<FileHash>, CliError> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: display_path(p, base),
                sha256: util::sha256_file(p)?,
            })
        })
        .collect()
}

impl Recorder {
    pub fn new(command: &str, seed: u64, threads: Option<usize>) -> Self {
        Self {
            command: command.to_string(),
            seed,
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn outputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    /// Hashes everything recorded and writes the manifest into `dir`.
    pub fn finish(self, dir: &Path, config: serde_json::Value) -> Result<RunManifest, CliError> {
        let digest_input = serde_json::json!({ "command": self.command, "seed": self.seed, "config": config });
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            argv: std::env::args().skip(1).collect(),
            config_digest: util::sha256_hex(digest_input.to_string().as_bytes()),
            inputs: hashes(&self.inputs, dir)?,
            outputs: hashes(&self.outputs, dir)?,
            command: self.command,
            seed: self.seed,
            threads: self.threads,
            config,
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        util::write_json(&dir.join(MANIFEST_NAME), &manifest)?;
        Ok(manifest)
    }
}
