use std::path::PathBuf;

use thiserror::Error;

/// Broad category of a failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("json error in {path}: {message}")]
    Json { path: PathBuf, message: String },

    #[error("missing value at ({row}, {col})")]
    MissingValue { row: usize, col: usize },

    #[error("non-numeric value {value:?} at ({row}, {col})")]
    NonNumeric { row: usize, col: usize, value: String },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("duplicate asset id {0:?}")]
    DuplicateAsset(String),

    #[error("column {0:?} has zero variance")]
    ZeroVariance(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e}); repair it with repair_to_correlation first")]
    NotPsd(f64),

    #[error("eigensolver did not converge (off-diagonal norm {0:e})")]
    NonConvergence(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("stale or mismatched activation tape: {0}")]
    StaleTape(String),

    #[error("corrupt weight file: {0}")]
    CorruptWeights(String),

    #[error("grid point {index}: {source}")]
    GridPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("point ({0}, {1}) lies outside the interpolation hull")]
    Extrapolation(f64, f64),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Json { .. } => ErrorKind::Config,
            Error::Io { .. }
            | Error::Csv { .. }
            | Error::MissingValue { .. }
            | Error::NonNumeric { .. }
            | Error::RaggedRow { .. }
            | Error::DuplicateAsset(_)
            | Error::Shape(_)
            | Error::CorruptWeights(_)
            | Error::StaleTape(_) => ErrorKind::Data,
            Error::ZeroVariance(_)
            | Error::NotSymmetric(_)
            | Error::InvalidCorrelation(_)
            | Error::NotPsd(_)
            | Error::NonConvergence(_)
            | Error::NonFinite(_)
            | Error::Divergence { .. }
            | Error::Extrapolation(..) => ErrorKind::Numerical,
            Error::GridPoint { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
