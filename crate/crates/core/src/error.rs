use crate::protocol::ProtocolResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state invariant violated: {0}")]
    InvariantViolation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("noise calibration failed: {0}")]
    CalibrationFailure(String),

    /// The observed score does not exceed the classical bound, so no
    /// min-entropy can be certified.
    #[error("no violation: score {score} does not exceed classical bound {bound}")]
    NoViolation { score: f64, bound: f64 },

    /// The device failed mid-run. `partial` holds every round completed
    /// before the failure.
    #[error("device failure at round {round}: {reason}")]
    DeviceFailure {
        round: u64,
        reason: String,
        partial: Box<ProtocolResult>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("digest mismatch for {path}: expected {expected}, found {found}")]
    DigestMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }
}
