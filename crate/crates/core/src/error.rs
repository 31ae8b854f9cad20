use thiserror::Error;

/// Errors raised by filter, path-space and transform operations.
#[derive(Debug, Error)]
pub enum WaveError {
    #[error("operation requires a {expected} filter, got {found}")]
    FilterKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("operation is only defined for scale N=2, got N={0}")]
    UnsupportedScale(usize),

    #[error("digit {digit} out of range for scale N={scale}")]
    DigitOutOfRange { digit: usize, scale: usize },

    #[error("operation requires a nonempty digit word")]
    EmptyWord,

    #[error("arity {arity} exceeds the configured maximum {max}")]
    ArityTooLarge { arity: usize, max: usize },

    #[error("depth {depth} exceeds the configured maximum {max}")]
    DepthTooLarge { depth: usize, max: usize },

    #[error("all transition weights vanish at step {step} (state {state})")]
    DegenerateStep { step: usize, state: f64 },

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WaveError>;
