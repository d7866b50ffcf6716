//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A computation produced or received NaN/Inf.
    #[error("non-finite value: {context}")]
    NonFinite { context: String },

    /// `sym_logm_psd` requires a strictly positive eigenvalue floor.
    #[error("eigenvalue floor must be > 0, got {floor}")]
    InvalidFloor { floor: f64 },

    /// A weight matrix violated symmetry/nonnegativity/zero-diagonal.
    #[error("invalid graph: {reason}")]
    InvalidGraph { reason: String },

    #[error("invalid model: {reason}")]
    InvalidModel { reason: String },

    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    /// A mixture component lost all responsibility mass.
    #[error("component {component} has no responsibility mass")]
    EmptyCluster { component: usize },

    /// Every restart of an iterative fit failed.
    #[error("all {attempts} restarts failed; last error: {last}")]
    AllRestartsFailed { attempts: usize, last: String },

    /// Random graph generation kept producing disconnected graphs.
    #[error("no connected graph after {attempts} attempts (n={n}, p={p})")]
    MaxResamples { attempts: usize, n: usize, p: f64 },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("ragged row {row}: expected {expected} fields, got {found}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },

    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaVersionMismatch { expected: String, found: String },

    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
