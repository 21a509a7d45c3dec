use std::path::Path;

use thiserror::Error;

/// A failed run. Each variant maps to its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("estimation failed: {0}")]
    Degenerate(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub const EXIT_CONFIG: u8 = 2;
    pub const EXIT_NOT_CONVERGED: u8 = 3;
    pub const EXIT_DEGENERATE: u8 = 4;
    pub const EXIT_IO: u8 = 5;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::NotConverged(_) => Self::EXIT_NOT_CONVERGED,
            CliError::Degenerate(_) => Self::EXIT_DEGENERATE,
            CliError::Io(_) => Self::EXIT_IO,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}
