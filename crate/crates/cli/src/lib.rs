//! Config-driven runs of the Aronsson solvers: artifacts, checks and exit
//! codes for the `aronsson` binary.

use std::path::PathBuf;

pub mod config;
pub mod run;
pub mod verify;

pub use config::{Mode, RunConfig};
pub use run::{run, Check, RunOptions, RunOutcome};
pub use verify::verify;

/// Schema version written into every JSON artifact.
pub const SPEC_VERSION: &str = "1.0";

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] aronsson_core::Error),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub(crate) fn config(line: usize, message: String) -> Self {
        CliError::Config { line, message }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
