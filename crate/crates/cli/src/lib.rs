//! Command-line front end: `aoi solve`, `aoi run` and `aoi verify`.

use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

pub mod commands;
pub mod experiment;
pub mod runner;
pub mod store;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn runtime(e: impl Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::Verification(_) => 1,
        }
    }
}

/// Crate version plus the git revision it was built from.
pub fn code_version() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("AOI_GIT_REV"))
}
