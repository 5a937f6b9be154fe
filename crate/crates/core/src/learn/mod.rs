//! Proximal policy optimization for the wrench policy.

use thiserror::Error;

use crate::env::EnvError;

pub mod buffer;
pub mod checkpoint;
pub mod gae;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod train;

pub use buffer::RolloutBuffer;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Hyperparameters, RecordedEval};
pub use gae::gae;
pub use mlp::Mlp;
pub use policy::{gaussian_log_prob, policy_sample, PolicyNet, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{ppo_update, Adam, PpoConfig, UpdateStats};
pub use train::{env_hash, evaluate_policy, train, CurveRow, EvalSchedule, TrainOutcome, TrainSetup};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss or gradient in minibatch {minibatch}")]
    NonFinite { minibatch: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("insufficient steps: total_env_steps {total} is smaller than one batch of {batch} steps")]
    InsufficientSteps { total: u64, batch: u64 },
}
