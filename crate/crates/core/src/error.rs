use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("singular linear system ({0})")]
    Singular(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("vector is not on the probability simplex: {0}")]
    NotOnSimplex(String),
    #[error("grid node {node} at ({x}, {y}) lies outside the source point hull")]
    OutsideHull { node: usize, x: f64, y: f64 },
    #[error("solver hit its iteration cap after {iterations} iterations (gradient mapping norm {residual:e})")]
    IterationCap {
        iterations: usize,
        residual: f64,
        best: Box<crate::polytope::BestApprox>,
    },
    #[error("training diverged in step {step} at epoch {epoch}")]
    Diverged { step: usize, epoch: usize },
    #[error("time step {step} failed: {reason}")]
    StepFailed { step: usize, reason: String },
    #[error("model is not initialized: {0}")]
    Uninitialized(&'static str),
    #[error("not implemented: {0}")]
    NotImplemented(String),
    #[error(transparent)]
    Storage(#[from] crate::storage::StorageError),
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            got,
            context,
        })
    }
}
