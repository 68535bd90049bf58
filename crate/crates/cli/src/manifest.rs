use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one invocation. Written even when the command fails; the
/// timestamp and wall time are the only fields that vary between
/// otherwise identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn start(command: &str, config_path: Option<&Path>, threads: usize) -> (Self, Instant) {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let m = RunManifest {
            schema_version: infoval_core::scenario::SCHEMA_VERSION,
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            started_unix,
            wall_time_s: 0.0,
            outputs: Vec::new(),
            status: "running".into(),
            exit_code: 0,
            error: None,
        };
        (m, Instant::now())
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(&mut self, started: Instant, exit_code: i32, error: Option<String>) {
        self.wall_time_s = started.elapsed().as_secs_f64();
        self.exit_code = exit_code;
        self.status = if exit_code == 0 { "ok" } else { "failed" }.into();
        self.error = error;
    }

    /// Writes the manifest into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
