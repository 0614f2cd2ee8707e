//! Experiment harness: configuration, seeded trial runner, parameter sweeps,
//! the invariant suite behind `privsel verify`, and CSV/JSON emission.

pub mod config;
pub mod emit;
pub mod runner;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid `{field}`: {message}")]
    Config { field: &'static str, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Core(#[from] privsel_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn config(field: &'static str, message: impl Into<String>) -> Self {
        Self::Config {
            field,
            message: message.into(),
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config { .. } | Self::Json(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub use config::{ExperimentConfig, ExperimentKind, ResolvedConfig};
pub use runner::{run_experiment, sweep, ResultRecord, TrialRow};
