use thiserror::Error;

/// Errors produced by estimation, selection and benchmarking.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("column {column} has zero variance")]
    DegenerateColumn { column: usize },

    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("eigendecomposition did not converge")]
    EigenFailure,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot initialize solver: diagonal entry {index} of the covariance is not positive")]
    Initialization { index: usize },

    #[error("solver diverged at inner iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("outer iteration {outer}: {source}")]
    Outer {
        outer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("lambda = {lambda:e}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("no edge-free model found for lambda up to {ceiling:e}")]
    SearchFailure { ceiling: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
}

impl Error {
    /// Strips `Outer` / `AtLambda` context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Outer { source, .. } | Error::AtLambda { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NotPsd { .. }
                | Error::NotPositiveDefinite
                | Error::EigenFailure
                | Error::Initialization { .. }
                | Error::Divergence { .. }
                | Error::SearchFailure { .. }
                | Error::UndefinedMetric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
