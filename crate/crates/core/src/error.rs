use std::path::PathBuf;

use thiserror::Error;

use crate::env::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("split point {point} outside 0..={chain_len}")]
    InvalidSplit { point: usize, chain_len: usize },

    #[error("pinned traffic type {type_index} must run the full chain at the DU (split {point}, expected {chain_len})")]
    PinnedSplit {
        type_index: usize,
        point: usize,
        chain_len: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dispatch {dispatch} kWh exceeds limit {limit} kWh at {node}")]
    DispatchExceeds {
        node: String,
        dispatch: f64,
        limit: f64,
    },

    #[error("action for unknown node {0}")]
    UnknownNode(NodeId),

    #[error("no action supplied for {0}")]
    MissingAction(NodeId),

    #[error("episode already terminated at t={0}")]
    Terminated(usize),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{}: row {row}: {message}", path.display())]
    Data {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{}: {found} rows, {needed} required", path.display())]
    TraceTooShort {
        path: PathBuf,
        found: usize,
        needed: usize,
    },

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("oracle instance too large: {0}")]
    OracleTooLarge(String),

    #[error("off-grid quantity: {0}")]
    OffGrid(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config { .. } => ErrorCategory::Config,
            Error::Data { .. }
            | Error::TraceTooShort { .. }
            | Error::ArtifactMismatch(_)
            | Error::Io { .. }
            | Error::Csv(_) => ErrorCategory::Data,
            _ => ErrorCategory::Runtime,
        }
    }
}
