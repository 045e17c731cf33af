//! Reproducibility record written at the start of every run.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{DataError, Result};
use crate::report::MANIFEST_JSON;

/// Version of this build, with the source revision when it was known at compile time.
pub fn build_id() -> String {
    let version = env!("CARGO_PKG_VERSION");
    match option_env!("BNTT_GIT_DESCRIBE") {
        Some(rev) if !rev.is_empty() => format!("{version}+{rev}"),
        _ => format!("{version}+unknown"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments as given.
    pub args: Vec<String>,
    /// Fully resolved configuration, one `section.key = value` per entry.
    pub config: Vec<String>,
    pub seed: u64,
    pub build_id: String,
    pub out_dir: PathBuf,
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, seed: u64, out_dir: &Path) -> Self {
        RunManifest {
            command: command.to_owned(),
            args: std::env::args().collect(),
            config: config_text.lines().map(str::to_owned).collect(),
            seed,
            build_id: build_id(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    /// Creates `out_dir` if needed and writes `manifest.json` into it.
    pub fn write(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| DataError::io(&self.out_dir, e))?;
        let path = self.out_dir.join(MANIFEST_JSON);
        let json = serde_json::to_string_pretty(self).map_err(|e| DataError::format("manifest", e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| DataError::io(&path, e))
    }
}
