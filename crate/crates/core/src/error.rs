//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by data handling, estimation and the ADMM solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("the truth-label noise model needs the true label of row {row}")]
    MissingTruthLabel { row: usize },

    #[error(
        "pilot fit diverged (|beta| = {norm:.3e} after {iterations} Newton steps); \
         the data look separable, refit the pilot with a small ridge penalty"
    )]
    Separation { norm: f64, iterations: usize },

    #[error("pilot Newton iterations did not converge (gradient inf-norm {grad:.3e})")]
    PilotNotConverged { grad: f64 },

    #[error(
        "H-norm quadratic form is negative ({value:.3e}); eta = {eta} underestimates \
         the spectral norm of mu*X'X, recompute eta with a larger safety factor"
    )]
    EtaTooSmall { value: f64, eta: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("worker {0} disconnected")]
    WorkerLost(usize),

    #[error("libsvm parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
