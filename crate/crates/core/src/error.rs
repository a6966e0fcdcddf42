use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: no rows")]
    NoRows { path: PathBuf },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("triplet index {index} out of range for {n} objects")]
    TripletOutOfRange { index: usize, n: usize },

    #[error("degenerate triplet ({i}, {j}, {k}): members must be distinct")]
    DegenerateTriplet { i: usize, j: usize, k: usize },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("degenerate row {0}: all off-diagonal distances are zero")]
    DegenerateRow(usize),

    #[error("row {0} collapsed: conditional probabilities do not normalize")]
    RowCollapsed(usize),

    #[error("perplexity {perplexity} is infeasible for {n} objects (must be < N)")]
    InfeasiblePerplexity { perplexity: f64, n: usize },

    #[error("object {0} has no revealed label")]
    Unlabeled(usize),

    #[error("non-finite cost at iteration {iter}: {detail}")]
    NonFinite { iter: usize, detail: String },

    #[error("empty triplet set")]
    EmptyTriplets,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
