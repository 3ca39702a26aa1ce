//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BaselineMode, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Train,
    Eval,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub episodes: u32,
    /// Write a checkpoint after every this many episodes.
    pub checkpoint_every: u32,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            episodes: 3,
            checkpoint_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalPlan {
    /// Held-out episode seeds.
    pub seeds: Vec<u64>,
    pub baselines: Vec<BaselineMode>,
    /// Also write every evaluation episode log as JSON lines.
    pub write_logs: bool,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            seeds: (1001..=1005).collect(),
            baselines: BaselineMode::ALL.to_vec(),
            write_logs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: RunMode,
    pub output_dir: PathBuf,
    pub sim: SimConfig,
    pub train: TrainPlan,
    pub eval: EvalPlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Both,
            output_dir: PathBuf::from("runs/default"),
            sim: SimConfig::default(),
            train: TrainPlan::default(),
            eval: EvalPlan::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}
