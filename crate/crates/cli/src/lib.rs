//! Library side of the `wmnsim` command: configuration loading, the subcommands, and the
//! built-in validation suites.

pub mod commands;
pub mod config;
pub mod oracle;
pub mod validate;

use thiserror::Error;

/// Errors mapped onto the documented exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, arguments or configuration. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(format!("csv error: {e}"))
    }
}

/// Simulation errors raised by configuration checks are usage errors; everything else is a
/// runtime failure.
impl From<wmn_core::SimError> for CliError {
    fn from(e: wmn_core::SimError) -> Self {
        use wmn_core::SimError::*;
        match e {
            InvalidConfig(_) | UnknownAxis(_) | UnknownVariant(_) | SameEndpoints => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
