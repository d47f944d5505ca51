use thiserror::Error;

/// Errors raised anywhere in the simulator suite.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("divergent series: {0}")]
    Divergence(String),

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("kinetic Monte Carlo stalled: total rate is {total_rate} at time {time}")]
    Stall { total_rate: f64, time: f64 },

    #[error("unstable time step: {0}")]
    Stability(String),

    #[error("blow-up at cell {cell} (time {time:e}): exponent {exponent:.3} exceeds the overflow limit")]
    BlowUp { cell: usize, time: f64, exponent: f64 },

    #[error("step size underflow at time {time:e}: dt = {dt:e} ({detail})")]
    Stiffness { time: f64, dt: f64, detail: String },

    #[error("tension table samples are not strictly increasing near u = {u}")]
    NonMonotone { u: f64 },

    #[error("degenerate profile: {0}")]
    Degenerate(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by invalid input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Usage(_) | Error::Config { .. } | Error::Unsupported(_) | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
