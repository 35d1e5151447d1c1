use thiserror::Error;

/// Errors raised across the simulator, environment and trainer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {what} = {got}, limit {limit}")]
    CapacityExceeded {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("step interval too large: normalization estimate {estimate} <= 0 (dt = {dt})")]
    StepIntervalTooLarge { estimate: f64, dt: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("operation {k} ({label}): {source}")]
    AtStep {
        k: usize,
        label: String,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Innermost error, past any step annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }

    /// Failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.root(),
            Error::StepIntervalTooLarge { .. }
                | Error::Numeric(_)
                | Error::NotConverged(_)
                | Error::InternalInconsistency(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
