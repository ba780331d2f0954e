use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("accuracy target not met: {0}")]
    Accuracy(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid time partition: {0}")]
    Partition(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("trajectory diverged at t = {time}: |x| = {norm:e}")]
    Divergence { time: f64, norm: f64 },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("problem file: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by the input rather than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Validation(_)
                | Error::Partition(_)
                | Error::Degenerate(_)
                | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
