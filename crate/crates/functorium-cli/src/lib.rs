//! Command implementations for the `functorium` binary.
//!
//! Commands return a [`CliError`] carrying the process exit code:
//! 1 usage/validation, 2 data/checkpoint mismatch, 3 numeric failure.

pub mod commands;
pub mod config;
pub mod plot;
pub mod runio;

pub use commands::{cmd_demo, cmd_eval, cmd_train, cmd_validate};
pub use config::RunConfig;

use functorium::Error as LibError;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn mismatch(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<LibError> for CliError {
    fn from(e: LibError) -> Self {
        let code = match &e {
            LibError::NonFinite(_) => 3,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

/// Worker-parallelism cap from `FUNCTORIUM_THREADS` (default 1). Compute is
/// currently single-threaded for bit reproducibility; the value is validated
/// and treated as an upper bound.
pub fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("FUNCTORIUM_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(|| {
            CliError::usage(format!(
                "FUNCTORIUM_THREADS must be a positive integer, got `{v}`"
            ))
        }),
    }
}
