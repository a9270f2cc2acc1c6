//! Library backing the `trignet` binary: configuration files, command
//! implementations, and trace/report emission. Kept as a library so
//! integration tests can drive the commands directly.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// CLI-level errors mapped onto the stable exit-code contract:
/// 0 success, 2 validation failure, 3 small-gain failure, 4 divergence
/// (1 for I/O and internal errors).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("small-gain analysis failed: {0}")]
    SmallGain(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::SmallGain(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<trignet_core::Error> for CliError {
    fn from(err: trignet_core::Error) -> Self {
        use trignet_core::Error as E;
        match err {
            E::SmallGainFails { .. }
            | E::PathConstructionFailed
            | E::PathBudgetExhausted { .. }
            | E::SigmaSearchFailed
            | E::NoClosedFormCheck
            | E::NonlinearKTooSmall { .. }
            | E::SigmaBarOutOfRange { .. } => CliError::SmallGain(err.to_string()),
            E::Divergence { .. } => CliError::Divergence(err.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}
