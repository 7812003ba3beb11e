//! Engine configuration: one TOML file describing where state lives, which
//! models compete, who examines and judges, and how campaigns run. A config
//! either validates completely or the command refuses to start.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Backend, BackendDescriptor, GatewayError, ModelPool};
use crate::rating::{BtOptions, EloParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} does not parse: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub seed: u64,
    pub parallelism: usize,
    pub target_battles: usize,
    pub evolution_rounds: u32,
    pub max_evolution_attempts: u32,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            seed: 0,
            parallelism: 8,
            target_battles: 0,
            evolution_rounds: 0,
            max_evolution_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgingConfig {
    /// Judge twice with swapped positions; disagreement becomes a tie.
    pub two_pass: bool,
    /// Attach video frames to bench judge calls.
    pub bench_frames: bool,
}

impl Default for JudgingConfig {
    fn default() -> Self {
        JudgingConfig {
            two_pass: false,
            bench_frames: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub storage_root: PathBuf,
    /// Video manifest to ingest; commands that only read the log can omit it.
    #[serde(default)]
    pub registry: Option<PathBuf>,
    pub pool: Vec<BackendDescriptor>,
    pub examiner: BackendDescriptor,
    pub judge: BackendDescriptor,
    #[serde(default)]
    pub elo: EloParams,
    #[serde(default)]
    pub bt: BtOptions,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub judging: JudgingConfig,
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: EngineConfig = toml::from_str(&raw).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source: Box::new(source),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.storage_root.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("storage_root is empty".into()));
        }
        if self.pool.is_empty() {
            return Err(ConfigError::Invalid("pool has no models".into()));
        }
        // Builds throwaway runtime objects so every descriptor is checked
        // the same way the commands will check it.
        ModelPool::new(self.pool.clone())?;
        Backend::new(self.examiner.clone())?;
        Backend::new(self.judge.clone())?;
        if self.scheduler.parallelism == 0 {
            return Err(ConfigError::Invalid("scheduler.parallelism must be at least 1".into()));
        }
        if self.scheduler.max_evolution_attempts == 0 {
            return Err(ConfigError::Invalid(
                "scheduler.max_evolution_attempts must be at least 1".into(),
            ));
        }
        if !(self.elo.alpha > 0.0) {
            return Err(ConfigError::Invalid("elo.alpha must be positive".into()));
        }
        if !(self.elo.k_factor > 0.0) {
            return Err(ConfigError::Invalid("elo.k_factor must be positive".into()));
        }
        if !(self.bt.tol > 0.0) {
            return Err(ConfigError::Invalid("bt.tol must be positive".into()));
        }
        if self.bt.max_iter == 0 {
            return Err(ConfigError::Invalid("bt.max_iter must be at least 1".into()));
        }
        if let Some(eps) = self.bt.ridge_epsilon {
            if !(eps > 0.0) {
                return Err(ConfigError::Invalid("bt.ridge_epsilon must be positive when set".into()));
            }
        }
        Ok(())
    }

    /// The contestant pool, ready to serve requests.
    pub fn build_pool(&self) -> Result<ModelPool, GatewayError> {
        ModelPool::new(self.pool.clone())
    }

    pub fn build_examiner(&self) -> Result<Backend, GatewayError> {
        Backend::new(self.examiner.clone())
    }

    pub fn build_judge(&self) -> Result<Backend, GatewayError> {
        Backend::new(self.judge.clone())
    }
}
