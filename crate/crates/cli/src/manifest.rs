//! Run manifests written beside every output.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::commands::{write_bytes, CliError};

pub const VERSION: &str = env!("LEADAE_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Timestamp {
    pub started_unix_s: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub timestamp: Timestamp,
}

/// Collects what a command read and wrote; `finish` stamps the clock.
pub struct Recorder {
    manifest: RunManifest,
    clock: Instant,
}

impl Recorder {
    pub fn start(command: &str) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Recorder {
            manifest: RunManifest {
                command: command.to_string(),
                config: Value::Null,
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                version: VERSION.to_string(),
                timestamp: Timestamp { started_unix_s: started, elapsed_s: 0.0 },
            },
            clock: Instant::now(),
        }
    }

    pub fn config(&mut self, config: impl Serialize) -> &mut Self {
        self.manifest.config = serde_json::to_value(config).expect("config serializes");
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.manifest.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.to_path_buf());
        self
    }

    /// Writes the manifest to `path`.
    pub fn finish(mut self, path: &Path) -> Result<RunManifest, CliError> {
        self.manifest.timestamp.elapsed_s = self.clock.elapsed().as_secs_f64();
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        write_bytes(path, text.as_bytes())?;
        Ok(self.manifest)
    }
}

/// `lead.json` -> `lead.json.manifest.json`.
pub fn beside(file: &Path) -> PathBuf {
    let mut name = file.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Manifest path for a directory output.
pub fn in_dir(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}
