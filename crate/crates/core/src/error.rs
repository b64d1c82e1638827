use crate::mathcore::MathError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: String },
    #[error("singular point: {0}")]
    SingularPoint(String),
    #[error("unsupported derivative order: {0}")]
    UnsupportedOrder(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("optimizer state mismatch: {0}")]
    State(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("diverged in window {window} at iteration {iter} (loss {loss:e})")]
    Divergence {
        window: usize,
        iter: usize,
        loss: f64,
    },
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn non_finite(op: impl Into<String>) -> Self {
        Error::NonFinite { op: op.into() }
    }
}
