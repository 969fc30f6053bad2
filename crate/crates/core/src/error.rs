use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("matrix is singular or numerically singular (|det| = {det:e})")]
    Singular { det: f64 },

    #[error("ensemble `{label}`: generator rejected {retries} consecutive draws")]
    RejectionLimit { label: String, retries: usize },

    #[error("unknown builtin ensemble `{name}` (available: {available})")]
    UnknownEnsemble { name: String, available: String },

    #[error("trajectory {trajectory}, step {step}: non-finite value ({what})")]
    NonFinite {
        trajectory: u64,
        step: u64,
        what: &'static str,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e}, gap ratio {gap_ratio:.4})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        gap_ratio: f64,
    },

    #[error("degenerate spectral model: {0}")]
    Degenerate(String),

    #[error("argument {value} outside the validated range [{lo}, {hi}]: {what}")]
    OutOfRange {
        what: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("missing prerequisite: {0}")]
    Missing(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration-class errors map to exit code 2 in the CLI.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::UnknownEnsemble { .. }
                | Error::Input(_)
                | Error::Missing(_)
                | Error::Io { .. }
        )
    }
}
