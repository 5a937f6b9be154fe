//! Run configuration: one sectioned TOML file, every key optional, unknown
//! keys rejected.
//!
//! ```toml
//! seed = 7
//!
//! [env]
//! goal_pos_range = 0.5
//!
//! [ppo]
//! total_env_steps = 3000000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::ActuationLimits;
use crate::baseline::PdGains;
use crate::dynamics::BodyParams;
use crate::env::{Env, EnvConfig, RewardWeights};
use crate::learn::{EvalSchedule, PpoConfig, TrainSetup};
use crate::mission::{MissionConfig, MissionParams, SafetyThresholds};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub body: BodyParams,
    pub actuation: ActuationLimits,
    pub env: EnvConfig,
    pub reward: RewardWeights,
    pub ppo: PpoConfig,
    pub baseline_gains: PdGains,
    /// Gains of the hold-pose fallback.
    pub hold_gains: PdGains,
    pub safety: SafetyThresholds,
    pub mission: MissionParams,
    pub logging: EvalSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            body: BodyParams::default(),
            actuation: ActuationLimits::default(),
            env: EnvConfig::default(),
            reward: RewardWeights::default(),
            ppo: PpoConfig::default(),
            baseline_gains: PdGains::default(),
            hold_gains: PdGains::hold(),
            safety: SafetyThresholds::default(),
            mission: MissionParams::default(),
            logging: EvalSchedule::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates; `origin` only labels error messages.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    /// Every key with its effective value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.task().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.mission_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ppo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.logging.eval_episodes == 0 || self.logging.heldout_episodes == 0 {
            return Err(ConfigError::Invalid("evaluation episode counts must be positive".into()));
        }
        if self.logging.selection_bank == self.logging.heldout_bank {
            return Err(ConfigError::Invalid("selection and held-out seed banks must differ".into()));
        }
        Ok(())
    }

    pub fn task(&self) -> Env {
        Env::new(self.env, self.reward, self.actuation, self.body)
    }

    pub fn mission_config(&self) -> MissionConfig {
        MissionConfig {
            env: self.task(),
            gains: self.baseline_gains,
            hold_gains: self.hold_gains,
            safety: self.safety,
            params: self.mission,
        }
    }

    pub fn train_setup(&self, workers: usize, out_dir: Option<PathBuf>) -> TrainSetup {
        TrainSetup {
            env: self.task(),
            ppo: self.ppo.clone(),
            schedule: self.logging.clone(),
            seed: self.seed,
            workers,
            config_text: self.to_toml(),
            out_dir,
        }
    }
}
