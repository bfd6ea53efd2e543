//! Run manifests: one JSON record per command invocation with the resolved
//! flags, seed, input digests, artifact paths, and wall-clock duration.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::CliError;

pub struct ManifestBuilder {
    command: String,
    flags: Map<String, Value>,
    seed: u64,
    inputs: Vec<Value>,
    artifacts: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            flags: Map::new(),
            seed,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn flag(&mut self, name: &str, value: impl Into<Value>) -> &mut Self {
        self.flags.insert(name.to_string(), value.into());
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push(json!({
            "path": path.display().to_string(),
            "sha256": hex,
        }));
        Ok(self)
    }

    pub fn artifact(&mut self, path: &Path) -> &mut Self {
        self.artifacts.push(path.display().to_string());
        self
    }

    /// Write the manifest next to the other artifacts and return its path.
    pub fn write(&self, path: PathBuf) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "command": self.command,
            "flags": Value::Object(self.flags.clone()),
            "seed": self.seed,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "duration_ms": self.started.elapsed().as_millis() as u64,
        });
        let text = serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes");
        std::fs::write(&path, text)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
