use alloc::string::String;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A physical noise parameter is outside its valid domain.
    #[error("invalid Markov-Middleton parameter `{name}` = {value}: {reason}")]
    InvalidNoiseParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid HMM parameters: {0}")]
    InvalidHmm(String),
    #[error("invalid EM configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: expected {expected} states, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("the M-step needs pairwise posteriors; run the E-step with pairwise output enabled")]
    MissingPairwisePosteriors,
    #[error("empty observation sequence")]
    EmptySequence,
    /// Every state had zero likelihood at time `t`.
    #[error("numerical underflow in forward-backward at t = {t}")]
    Underflow { t: usize },
    /// The reference assigns mass to a transition the estimate rules out.
    #[error("KL divergence is infinite: estimate has zero mass at ({row}, {col})")]
    InfiniteDivergence { row: usize, col: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
