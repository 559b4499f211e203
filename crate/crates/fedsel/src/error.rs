//! Error type shared across the crate.
//!
//! Numerics never panic on bad input: dimension mismatches, malformed data
//! files and degenerate math all surface as a variant here.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or size mismatch between tensors, layers or parameter blocks.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument was outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A computation produced or received a NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The requested non-IID split cannot be satisfied by the dataset.
    #[error("partition infeasible: class {class}: {detail}")]
    Partition { class: usize, detail: String },

    /// A client returned parameters that do not match the global model.
    #[error("aggregation failed: {0}")]
    Aggregation(String),

    /// A selector violated the round protocol (wrong count, duplicate or
    /// out-of-range client ids).
    #[error("selection protocol violation: {0}")]
    Protocol(String),

    /// Graph construction found a node with zero degree, so the normalized
    /// Laplacian is undefined.
    #[error("isolated node {0} has zero degree")]
    IsolatedNode(usize),

    /// An iterative solver exhausted its iteration budget.
    #[error("did not converge: {0}")]
    Convergence(String),

    /// Every class received zero posterior mass in an ensemble vote.
    #[error("degenerate vote: all class posteriors are zero")]
    DegenerateVote,

    /// Chance-corrected metrics are undefined when only one label value
    /// occurs.
    #[error("metrics undefined: labels contain a single class")]
    SingleClassLabels,

    /// A data file failed structural validation.
    #[error("{path}: format error at byte {offset}: {detail}")]
    Format {
        path: String,
        offset: u64,
        detail: String,
    },

    /// A config file could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
