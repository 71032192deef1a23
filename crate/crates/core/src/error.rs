use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("line search exhausted its backtracks (last trial step {last_alpha:e})")]
    LineSearch { last_alpha: f64 },

    #[error("worker {worker}: {source}")]
    Worker {
        worker: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("round {round}: {source}")]
    Round {
        round: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_worker(self, worker: usize) -> Self {
        Error::Worker {
            worker,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_round(self, round: u64) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }

    /// True for errors that stem from the configuration or inputs rather
    /// than from a solver failing mid-run.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::InvalidInput(_) => true,
            Error::Io(_) => true,
            Error::Worker { source, .. } | Error::Round { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
