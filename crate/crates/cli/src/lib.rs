//! Subcommands of the `scanforge` binary as library functions.

pub mod config;
pub mod counts;
pub mod output;
pub mod register;
pub mod scaling;

use thiserror::Error;

pub use config::ExperimentSpec;
pub use counts::{cmd_counts, cmd_verify, CountRow, VerifyRow};
pub use register::{cmd_register, RegisterReport};
pub use scaling::{cmd_scaling, cmd_simulate, ScalingReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Counted figures disagree with the formulas, or a network is wrong.
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Compute(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Mismatch(_) | CliError::Compute(_) => 1,
            CliError::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub(crate) fn compute(e: impl std::fmt::Display) -> Self {
        CliError::Compute(e.to_string())
    }
}
