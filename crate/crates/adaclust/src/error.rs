//! Crate-wide error type and result alias.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the library.
#[derive(Debug)]
pub enum Error {
    /// Matrix or vector dimensions do not fit the operation.
    Shape { context: &'static str, detail: String },
    /// A scalar argument is outside its valid range.
    InvalidParameter { name: &'static str, detail: String },
    /// A dimension constraint between configured sizes is violated.
    Dimension { detail: String },
    /// A configuration value or combination is invalid.
    Config(String),
    /// A data file could not be parsed.
    Parse { line: usize, detail: String },
    /// A checkpoint or record file is missing, corrupt, or incompatible.
    Persistence(String),
    /// A numerical procedure failed (lost positive-definiteness, diverged, ...).
    Numerical { detail: String, iteration: Option<usize> },
    /// Training aborted because the loss became non-finite.
    TrainDiverged { epoch: usize, batch: usize, detail: String },
    /// The tape was used out of order (e.g. backward before a loss was recorded).
    TapeState(&'static str),
    /// A primitive on the tape was evaluated on invalid operands.
    TapeDomain { node: usize, op: &'static str },
    /// A loss evaluation produced a non-finite value during a derivative check.
    Evaluation(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { context, detail } => write!(f, "shape error in {context}: {detail}"),
            Error::InvalidParameter { name, detail } => {
                write!(f, "invalid parameter `{name}`: {detail}")
            }
            Error::Dimension { detail } => write!(f, "dimension error: {detail}"),
            Error::Config(detail) => write!(f, "configuration error: {detail}"),
            Error::Parse { line, detail } => write!(f, "parse error at line {line}: {detail}"),
            Error::Persistence(detail) => write!(f, "persistence error: {detail}"),
            Error::Numerical { detail, iteration } => match iteration {
                Some(it) => write!(f, "numerical error at iteration {it}: {detail}"),
                None => write!(f, "numerical error: {detail}"),
            },
            Error::TrainDiverged { epoch, batch, detail } => {
                write!(f, "training diverged at epoch {epoch}, batch {batch}: {detail}")
            }
            Error::TapeState(detail) => write!(f, "tape state error: {detail}"),
            Error::TapeDomain { node, op } => {
                write!(f, "domain error in `{op}` at tape node {node}")
            }
            Error::Evaluation(detail) => write!(f, "evaluation error: {detail}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}
