//! Experiment harness for the sleepy consensus protocols: trial runner,
//! parameter sweeps and artifact writers behind the `sleepy` binary.

use std::path::{Path, PathBuf};

pub mod config;
pub mod experiment;
pub mod sweep;

pub use config::{AdversarySpec, ExperimentConfig, InputSpec};
pub use experiment::{run_experiment, ExperimentOutcome, Summary, TrialRow};
pub use sweep::{run_sweep, SweepConfig, SweepRow};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] sleepy_consensus::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::InvalidConfig(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Configuration problems, including ones the model layer rejects.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::InvalidConfig(_)
                | HarnessError::Model(sleepy_consensus::Error::InvalidConfig(_))
        )
    }
}
