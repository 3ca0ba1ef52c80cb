//! Blind channel estimation for BPSK over bursty impulsive noise.
//!
//! The noise follows the finite-state Markov-Middleton model: a Gaussian
//! mixture whose component index evolves as a Markov chain. BPSK symbols and
//! noise states are combined into one hidden Markov model with `S = 2W`
//! states, which is then estimated blindly with Baum-Welch, either with the
//! standard M-step or with a constrained M-step that ties parameters shared
//! across the trellis.
//!
//! State layout used throughout the crate: joint state `j` carries symbol
//! `j / W` (0 maps to `-1`, 1 maps to `+1`) and noise state `j % W`.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bcjr;
pub mod em;
pub mod error;
mod math;
pub mod matrix;
pub mod metrics;
pub mod noise_model;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod trellis;

pub use bcjr::{emission_likelihood, forward_backward, symbol_posteriors, PairwiseMode, PosteriorTables};
pub use em::{
    m_step_constrained, m_step_standard, run_em, EmConfig, EmTrace, EmVariant, EmWarning,
    IterationRecord, MStep, StopReason, ThresholdScale,
};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::{kl_transitions, nmse_variances, MetricReport};
pub use noise_model::{
    generate_noise, generate_noise_with, noise_transition_matrix, state_probabilities,
    state_variances, MiddletonParams, NoiseRealization,
};
pub use trellis::{
    build_constraint_groups, build_reference_hmm, transmit, ConstraintGroups, HmmParams,
};
