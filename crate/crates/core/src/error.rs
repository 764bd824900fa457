use alloc::string::String;

/// Errors surfaced by the core operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    /// The requested computation exceeds a configured resource cap.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// The input is degenerate for the requested computation.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
