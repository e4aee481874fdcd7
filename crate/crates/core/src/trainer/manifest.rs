use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{ConfigError, TrainError};

/// Settings of a tabular chain experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySettings {
    pub horizon: usize,
    /// Strategies run, by name.
    pub strategies: Vec<String>,
    pub noise: f64,
    pub ensemble_size: usize,
    pub max_updates: u64,
    pub log_every: u64,
}

/// Run metadata written as `manifest.toml` next to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub version: String,
    pub asynchronous: bool,
    /// Seconds since the Unix epoch.
    pub started_unix_s: f64,
    pub finished_unix_s: Option<f64>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    /// Horizons of a horizon sweep; empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<usize>,
    pub config: Option<TrainConfig>,
    pub toy: Option<ToySettings>,
}

pub(crate) fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            asynchronous: false,
            started_unix_s: unix_now(),
            finished_unix_s: None,
            artifacts: Vec::new(),
            horizons: Vec::new(),
            config: None,
            toy: None,
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix_s = Some(unix_now());
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_toml()).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
