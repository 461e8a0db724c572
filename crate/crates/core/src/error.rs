use thiserror::Error;

/// Outcome of an iterative solver (fixed point or Blahut-Arimoto loop).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// Max-abs residual of the stationarity equations at the returned point.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular covariance in {context}")]
    SingularCovariance { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown block label `{0}`")]
    UnknownLabel(String),

    #[error("{context} is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { context: String, asymmetry: f64 },

    #[error("{context} is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemiDefinite { context: String, min_eigenvalue: f64 },

    #[error("likelihood matrix does not have full row rank")]
    NotFullRowRank,

    #[error("beta = {beta} is infeasible: {reason}")]
    InfeasibleBeta { beta: f64, reason: String },

    #[error("no convergence after {} iterations (residual {:.3e})", .report.iterations, .report.residual)]
    NoConvergence { report: FixedPointReport },

    #[error("probabilities sum to {total}, not 1")]
    NotNormalized { total: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergenceDetected { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

impl Error {
    pub(crate) fn singular(context: impl Into<String>) -> Self {
        Error::SingularCovariance {
            context: context.into(),
        }
    }

    pub(crate) fn dims(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
