use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edges form a cycle through `{0}`")]
    Cycle(String),

    #[error("edge `{from}` -> `{to}` targets interventional node `{to}`")]
    Exogeneity { from: String, to: String },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot parse `{value}` as a real")]
    Parse { row: usize, column: String, value: String },

    #[error("interventional column `{column}` has value {value} outside [0, 1] at row {row}")]
    Range { row: usize, column: String, value: f64 },

    #[error("graphs are over different node sets")]
    NodeSetMismatch,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("group `{0}` has no rows to compute the rate on")]
    EmptyGroup(&'static str),

    #[error("privileged selection rate is zero")]
    DivisionByZero,

    #[error("need more than {k} rows for k-nearest-neighbour consistency, got {rows}")]
    InsufficientRows { rows: usize, k: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("treatment `{0}` has no residual variation after adjustment")]
    DegenerateTreatment(String),

    #[error("outcome `{outcome}` is a parent of treatment `{treatment}`")]
    InvalidAdjustment { treatment: String, outcome: String },

    #[error("value {value} lies outside the observed range [{low}, {high}] of `{given}`")]
    Extrapolation {
        given: String,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("rank deficient design: {0}")]
    Rank(String),

    #[error("analyses mix metric pairs ({0} vs {1})")]
    MixedPair(String, String),

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON in {path}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid CSV in {path}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
