use thiserror::Error;

/// Errors raised by the inference routines and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {theta} outside domain: {reason}")]
    Domain { theta: f64, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate design: all lagged values are zero over t = {from}..={to}")]
    DegenerateDesign { from: usize, to: usize },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("scan window exhausted at half-width {half_width} without bracketing the region boundary")]
    ScanWindow { half_width: f64 },

    #[error("failure budget exceeded: {failed} of {total} replications failed")]
    FailureBudget { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
