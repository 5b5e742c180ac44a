//! Experiment runner behind the `numsmooth` binary.

pub mod config;
pub mod report;
pub mod runner;

use std::fmt;

/// Failures with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unknown preset, invalid combination.
    Usage(String),
    /// A numerical run failed outright.
    Numerical(numsmooth::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<numsmooth::Error> for CliError {
    fn from(e: numsmooth::Error) -> Self {
        match e {
            numsmooth::Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Numerical(other),
        }
    }
}

/// Exit status for a finished run.
pub const EXIT_NOT_CONVERGED: i32 = 3;
