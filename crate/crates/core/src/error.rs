use std::path::PathBuf;

use crate::data::Role;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("row {row}, column {column}: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("no observations")]
    NoObservations,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Local design matrix could not be rescued by the ridge.
    #[error("singular local design at {query:?} (condition number {condition:e})")]
    SingularDesign { query: Vec<f64>, condition: f64 },

    /// lp-R design matrix rejected at one query point.
    #[error("ill-conditioned R-learner design at {query:?}: {reason}")]
    IllConditioned { query: Vec<f64>, reason: String },

    #[error("fold {role} has no rows with a = {arm}")]
    EmptyArm { role: Role, arm: u8 },

    #[error("fold {0} is required but empty")]
    MissingRole(Role),

    #[error("no evaluation point could be scored")]
    EvaluationEmpty,

    #[error("{what} requires known nuisance functions")]
    TruthRequired { what: &'static str },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Per-query failures are excluded from MSE rather than aborting a fit.
    pub fn is_query_failure(&self) -> bool {
        matches!(self, Error::SingularDesign { .. } | Error::IllConditioned { .. })
    }
}
