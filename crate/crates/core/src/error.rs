use std::path::PathBuf;

use crate::grid::TileAddress;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("integrity error in {}: {message}", path.display())]
    Integrity { path: PathBuf, message: String },

    #[error("normalization error: missing required fields {}", missing.join(", "))]
    MissingFields { missing: Vec<String> },

    #[error("validation failed: {}", violations.join("; "))]
    Invalid { violations: Vec<String> },

    #[error("incomplete mosaic: {} tile(s) missing, first {:?}", missing.len(), missing.first())]
    IncompleteMosaic { missing: Vec<TileAddress> },

    #[error("partial result: nodes {missing_nodes:?} unavailable")]
    PartialResult { missing_nodes: Vec<usize> },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
