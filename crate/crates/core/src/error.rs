use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{what}: requested {requested}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("lambda schedule is empty")]
    EmptySchedule,

    #[error("support violation: sample at |x| = {radius} is {magnitude:e}, but f must vanish on |x| < {bound}")]
    SupportViolation {
        radius: f64,
        magnitude: f64,
        bound: f64,
    },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("finite difference not converged: lhs changed by {relative_change:.3e} (relative) when halving dt")]
    NotConverged { relative_change: f64 },

    #[error("oracle budget exceeded: {0}")]
    Budget(String),

    #[error("field format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors raised by a size, time or memory cap rather than bad input.
    pub fn is_resource_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. } | Error::Budget(_))
    }
}
