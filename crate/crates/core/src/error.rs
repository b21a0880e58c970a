//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    /// Occupancy cannot be estimated from empty observations.
    #[error("occupancy undefined: all subgame buffers are empty")]
    EmptyOccupancy,

    /// Improvement delta is undefined when the baseline does not outperform
    /// the victim-play comparator.
    #[error("improvement delta undefined: PM_B ({pm_b}) must exceed PM_V ({pm_v})")]
    DeltaUndefined { pm_b: f64, pm_v: f64 },

    /// Defense effect is undefined when the no-defense attack has no effect.
    #[error("defense effect undefined: no-defense attack effectiveness is {0}")]
    EffectUndefined(f64),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn dims(expected: usize, got: usize, context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected,
            got,
            context: context.into(),
        }
    }
}
