use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter vector or model setting lies outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Every particle weight was zero at time `t` (1-based).
    #[error("degenerate particle system: all weights vanish at t = {t}")]
    Degenerate { t: usize },

    /// The requested operation is not available for this model or configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Malformed arguments: length mismatches, empty inputs and the like.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A failure inside a chain, tagged with the iteration that produced it.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
