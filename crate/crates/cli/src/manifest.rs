//! Run manifests: resolved settings, inputs, outputs with checksums, and
//! wall-clock, written atomically at the end of every command.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Serialize)]
struct ArtifactRecord {
    path: String,
    sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    outputs: Vec<ArtifactRecord>,
    pub wall_clock_seconds: f64,
}

pub struct ManifestBuilder {
    command: String,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    /// Registers an artifact that must exist when the manifest is written.
    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Checksums every artifact and writes `manifest.json` atomically.
    pub fn write(self, out_dir: &Path) -> std::io::Result<()> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p)?;
                Ok(ArtifactRecord {
                    path: p.display().to_string(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<std::io::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command,
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let target = out_dir.join("manifest.json");
        let tmp = out_dir.join("manifest.json.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, &target)?;
        Ok(())
    }
}

/// Hex SHA-256 of a file, for tests and tooling.
pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}
