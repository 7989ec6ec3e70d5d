use thiserror::Error;

use crate::outcome::Method;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("regressor matrix is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("unit {unit}: {source}")]
    Unit {
        unit: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("residual vector of unit {0} is identically zero")]
    DegenerateResidual(usize),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("variance estimate {0:e} is not positive")]
    NonPositiveVariance(f64),

    #[error("trace of the column sample covariance is zero")]
    ZeroTrace,

    #[error("column sample covariance has non-positive diagonal entry at {0}")]
    DegenerateDiagonal(usize),

    #[error("thresholded covariance has zero Frobenius norm")]
    ZeroMatrix,

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("sample too small: {0}")]
    SmallSample(String),

    #[error("symmetric eigensolver did not converge")]
    EigenFailure,

    #[error("{method}: {source}")]
    Method {
        method: Method,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unbalanced panel: unit {unit} has no observation at time {time}")]
    UnbalancedPanel { unit: String, time: String },

    #[error("duplicate observation for unit {unit} at time {time}")]
    DuplicateObservation { unit: String, time: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from user input rather than from computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::UnbalancedPanel { .. }
            | Error::DuplicateObservation { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::DimensionMismatch(_) => true,
            Error::Unit { source, .. } | Error::Method { source, .. } => source.is_input_error(),
            _ => false,
        }
    }

    pub(crate) fn for_unit(self, unit: usize) -> Error {
        Error::Unit {
            unit,
            source: Box::new(self),
        }
    }

    pub(crate) fn for_method(self, method: Method) -> Error {
        Error::Method {
            method,
            source: Box::new(self),
        }
    }
}
