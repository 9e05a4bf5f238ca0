use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected ℍ^{expected}, got ℍ^{found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An integral or norm failed to converge. `at` locates the offending
    /// endpoint, radius or point when one is known.
    #[error("divergent: {reason}")]
    Divergent { reason: String, at: Option<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular linear map (det = {0})")]
    Singular(f64),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn divergent(reason: impl Into<String>, at: Option<f64>) -> Self {
        Error::Divergent { reason: reason.into(), at }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, Error::Divergent { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
