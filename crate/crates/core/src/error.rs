use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence {
        iteration: usize,
        loss: f64,
        /// Last parameter vector with a finite loss.
        last_finite: Vec<f64>,
    },

    #[error("Cholesky factorisation failed after jitter escalation (max jitter {jitter:e})")]
    Cholesky { jitter: f64 },

    #[error("numerical oracle did not converge: {0}")]
    Convergence(String),

    #[error("all {0} hyperparameter restarts failed")]
    FitFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
