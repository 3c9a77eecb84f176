//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the training laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's contract (shape mismatch, out-of-range
    /// index, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A hyperparameter is outside its valid domain.
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    /// An input is numerically degenerate (e.g. a zero-norm row fed to
    /// normalization).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Experiment or dataset configuration is unsatisfiable. The message
    /// lists every problem found, one per line.
    #[error("configuration error: {0}")]
    Config(String),

    /// A dataset or checkpoint file failed to parse.
    #[error("parse error at byte {offset} while reading {field}: {message}")]
    Parse {
        offset: u64,
        field: &'static str,
        message: String,
    },

    /// Training produced a non-finite loss; the batch that triggered it is
    /// identified by sample ids.
    #[error("non-finite loss at iteration {iteration}; labeled batch ids {labeled_ids:?}, unlabeled batch ids {unlabeled_ids:?}")]
    NonFiniteLoss {
        iteration: u64,
        labeled_ids: Vec<u64>,
        unlabeled_ids: Vec<u64>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors a user can fix by editing a config or command line,
    /// as opposed to runtime failures.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidHyperparameter(_) | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
