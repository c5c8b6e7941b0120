use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("solver reached {iterations} iterations without meeting tolerance (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("hard-threshold iteration cycles with period {period} (step shrunk to {step:e})")]
    Cycling { period: usize, step: f64 },

    #[error("dense assembly refused: {free} free nodes exceeds cap {cap}; use a coarser grid")]
    DenseCapExceeded { free: usize, cap: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by user-supplied problem data or settings.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}
