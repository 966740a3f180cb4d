//! Buffered outputs committed together with their run manifest.

use anyhow::{Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Provenance record written next to every set of outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

/// Files held in memory until [`Outputs::commit`], so a failed run leaves
/// nothing behind.
pub struct Outputs {
    command: String,
    started: Instant,
    files: Vec<(PathBuf, Vec<u8>)>,
    pub warnings: Vec<String>,
    pub details: serde_json::Value,
}

impl Outputs {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: Instant::now(),
            files: Vec::new(),
            warnings: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, content: impl Into<Vec<u8>>) {
        self.files.push((path.into(), content.into()));
    }

    /// Writes every file, then the manifest at `manifest_path`. On failure,
    /// files written so far are removed.
    pub fn commit(self, manifest_path: &Path, config: serde_json::Value, seed: Option<u64>) -> Result<()> {
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            seed,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            warnings: self.warnings,
            outputs: self.files.iter().map(|(p, _)| p.display().to_string()).collect(),
            details: self.details,
        };
        let mut files = self.files;
        files.push((manifest_path.to_path_buf(), serde_json::to_vec_pretty(&manifest)?));

        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| -> Result<()> {
            for (path, content) in &files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                }
                let tmp = path.with_extension("partial");
                std::fs::write(&tmp, content).with_context(|| format!("writing {}", tmp.display()))?;
                written.push(tmp.clone());
                std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
                written.pop();
                written.push(path.clone());
            }
            Ok(())
        })();
        if result.is_err() {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
        }
        result
    }
}

/// `<out>.manifest.json` for single-file commands.
pub fn sidecar_manifest(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
