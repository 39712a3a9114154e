//! Library side of the `adaclust` command-line tool. Every subcommand is an
//! ordinary function here so tests can drive them directly; `main` only
//! parses arguments and maps errors to exit codes.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::{Path, PathBuf};

/// CLI failure categories, mapped to exit codes by `main`:
/// usage/configuration errors exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<adaclust::Error> for CliError {
    fn from(err: adaclust::Error) -> Self {
        use adaclust::Error::*;
        match &err {
            Config(_) | InvalidParameter { .. } | Parse { .. } | Dimension { .. } => {
                CliError::Usage(err.to_string())
            }
            Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::Usage(err.to_string())
            }
            _ => CliError::Runtime(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Resolves a path against the optional `ADACLUST_OUT_ROOT` override:
/// relative paths are placed under the root when it is set.
pub fn resolve_out_path(path: &Path) -> PathBuf {
    match std::env::var_os("ADACLUST_OUT_ROOT") {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
