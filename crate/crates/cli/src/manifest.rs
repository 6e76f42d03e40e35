use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// Record of one command run, written as JSON beside its outputs.
pub struct Manifest {
    command: &'static str,
    seed: Option<u64>,
    config: Map<String, Value>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    extra: Map<String, Value>,
    started: Instant,
}

impl Manifest {
    pub fn start(command: &'static str, seed: Option<u64>) -> Self {
        Self {
            command,
            seed,
            config: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: Map::new(),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.config.insert(key.into(), value.into());
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn extra(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.extra.insert(key.into(), value.into());
        self
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let paths = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
        let mut doc = json!({
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": paths(&self.inputs),
            "outputs": paths(&self.outputs),
            "duration_secs": self.started.elapsed().as_secs_f64(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        for (k, v) in &self.extra {
            doc[k] = v.clone();
        }
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Hex SHA-256 of a file.
pub fn file_hash(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `model.paeb` → `model.manifest.json`
pub fn beside(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}
