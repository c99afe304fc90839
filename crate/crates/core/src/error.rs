use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ParsecError>;

#[derive(Debug, Error)]
pub enum ParsecError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("only {rows} complete rows remain after dropping incomplete ones; at least 3 are required")]
    TooFewRows { rows: usize },

    #[error("column {index} ({name}) has zero sample variance")]
    ZeroVariance { index: usize, name: String },

    #[error("non-finite value in column {column}, row {row}")]
    NonFinite { row: usize, column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("leave-one-out Gram matrix for feature {feature} is singular (reciprocal condition {rcond:.3e})")]
    SingularLeaveOneOut { feature: usize, rcond: f64 },

    #[error("U-score Gram matrix is singular (reciprocal condition {rcond:.3e}); need p >= n and generic data")]
    SingularGram { rcond: f64 },

    #[error("degenerate leave-one-out leverage for feature {feature}: B_jj = {leverage}")]
    DegenerateLeverage { feature: usize, leverage: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance structure is not positive definite (smallest eigenvalue {min_eigenvalue:.3e}): {detail}")]
    NotPositiveDefinite { min_eigenvalue: f64, detail: String },

    #[error("estimator failed: {0}")]
    Estimation(String),
}
