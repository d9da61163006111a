//! Error type shared by every module in the crate.

/// Validation and numerical failures surfaced by the library.
///
/// Construction-time validation errors carry enough context to name the
/// offending field; numerical errors mark states the caller may want to
/// treat as a soft failure (e.g. a swarm particle scoring zero fitness)
/// rather than a panic.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A geometry or physics parameter is out of its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Matrix/vector dimensions disagree with the stated contract.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A linear solve failed (matrix not positive definite or singular).
    #[error("linear solve failed in {context}")]
    SolveFailed { context: &'static str },

    /// A requested exhaustive search would exceed the configured budget.
    #[error("search space too large: {detail}")]
    SearchSpaceTooLarge { detail: String },
}

impl Error {
    /// Shorthand for [`Error::InvalidParameter`].
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
