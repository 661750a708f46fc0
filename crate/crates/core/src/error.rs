use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input in `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("empty feature: {0}")]
    EmptyFeature(String),

    #[error("ill-conditioned subspace: {0}")]
    IllConditioned(String),

    #[error("not a kernel: {0}")]
    NotAKernel(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput { .. } => "invalid_input",
            Error::InvalidState(_) => "invalid_state",
            Error::AlphabetMismatch(_) => "alphabet_mismatch",
            Error::EmptyFeature(_) => "empty_feature",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::NotAKernel(_) => "not_a_kernel",
            Error::Precondition(_) => "precondition",
            Error::Domain(_) => "domain",
        }
    }

    /// The offending field, when the error is tied to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::InvalidInput { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
