//! Run manifest: what a command read, what it wrote, and with which seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<PathBuf>,
    pub metrics: BTreeMap<String, Value>,
    pub duration_secs: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
            duration_secs: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.to_string(), serde_json::to_value(value).expect("metric serializes"));
    }

    /// Writes `manifest.json` into `dir`; always the last file a command writes.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        self.duration_secs = self.started.map_or(0.0, |s| s.elapsed().as_secs_f64());
        let path = dir.join(MANIFEST_FILE);
        let mut body = serde_json::to_string_pretty(&self).map_err(|e| CliError::Internal(e.into()))?;
        body.push('\n');
        crate::write_file(&path, body.as_bytes())?;
        Ok(path)
    }
}
