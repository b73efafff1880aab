use thiserror::Error;

/// Errors raised by the simulators, estimators and solvers in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite gradient for agent {id} at theta = {theta:?}")]
    NonFiniteGradient { id: usize, theta: Vec<f64> },

    #[error("objective `{objective}` does not provide {capability}")]
    MissingCapability {
        objective: &'static str,
        capability: &'static str,
    },

    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),

    #[error("size {size} exceeds the assignment limit {max}; subsample the inputs first")]
    TooLarge { size: usize, max: usize },

    #[error("stability condition violated: {0}")]
    Unstable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
