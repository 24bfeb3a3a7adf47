//! Experiment orchestration: configuration, forward-model adapters and the
//! five pipeline commands (generate, simulate, train, assimilate, report).

pub mod adapters;
pub mod commands;
pub mod config;

pub use commands::{cmd_assimilate, cmd_generate, cmd_report, cmd_simulate, cmd_train, Manifest, Method};
pub use config::{ConfigError, ExperimentConfig};

/// Command-level failure, split by exit code: validation errors exit 1,
/// runtime failures exit 2.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn validation(msg: impl Into<String>) -> Self {
        HarnessError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        HarnessError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Validation(e.to_string())
    }
}
