//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by simulation, optimization, and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An allocation failed a hard feasibility requirement.
    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    /// A configuration file or experiment description is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// Training produced non-finite or runaway values.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A required checkpoint was missing or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Underlying I/O failure (file system, CSV emission).
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Contract(format!("malformed CSV data: {other:?}")),
        }
    }
}

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable category, used by the CLI's structured stderr line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::Infeasible(_) => "infeasible",
            Error::Config(_) => "config",
            Error::Diverged(_) => "diverged",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
        }
    }
}
