use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A probability vector or table failed validation.
    #[error("invalid distribution: {0}")]
    Validation(String),

    /// A channel or code document could not be read.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Exhaustive enumeration would exceed the configured term budget.
    #[error("enumeration budget exceeded: {terms} terms > cap {cap}")]
    Budget { terms: u128, cap: u128 },

    /// Iterative solver stopped before reaching tolerance.
    #[error("no convergence after {iterations} iterations (bracket [{lower}, {upper}])")]
    NonConvergence {
        iterations: usize,
        lower: f64,
        upper: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
