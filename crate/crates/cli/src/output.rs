use std::path::{Path, PathBuf};

use optac_core::stats::{iqr, median};
use serde::Serialize;
use serde_json::Value;

use crate::RuntimeError;

/// Output directory plus the list of files written so far, in write order.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Result<Self, RuntimeError> {
        std::fs::create_dir_all(root).map_err(|e| RuntimeError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<(), RuntimeError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| RuntimeError::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| RuntimeError::io(&path, e))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), RuntimeError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| RuntimeError::Other(e.to_string()))?;
        text.push('\n');
        self.write(rel, &text)
    }

    /// Writes `manifest.json`: tool version, the command, the resolved config
    /// and every file written before it.
    pub fn finish(mut self, command: &str, config: Value, seeds: &[u64]) -> Result<(), RuntimeError> {
        let manifest = serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seeds": seeds,
            "config": config,
            "files": self.files,
        });
        self.write_json("manifest.json", &manifest)
    }
}

/// Median and interquartile range of one statistic across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub n: usize,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let quartiles = iqr(&finite);
        Self {
            n: finite.len(),
            median: median(&finite),
            q25: quartiles.map(|q| q.0),
            q75: quartiles.map(|q| q.1),
        }
    }
}

/// Shortest round-trip rendering used in file names, e.g. `0.01`.
pub fn tag(x: f64) -> String {
    format!("{x}")
}
