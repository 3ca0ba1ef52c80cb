//! Joint BPSK x noise-state hidden Markov model.
//!
//! Joint state `j = symbol * W + noise_state`, where symbol 0 is `-1` and
//! symbol 1 is `+1`. Every module relies on this layout.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::noise_model::{
    noise_transition_matrix, state_probabilities, state_variances, MiddletonParams,
    NoiseRealization,
};

/// Row sums and the initial distribution must be within this of 1.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-10;

/// Gaussian-emission HMM parameters: the estimated set (means, variances,
/// transitions) plus the initial state law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HmmParams {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub transitions: Matrix,
    pub initial_dist: Vec<f64>,
}

impl HmmParams {
    pub fn num_states(&self) -> usize {
        self.means.len()
    }

    /// Checks shapes, positivity and stochasticity.
    pub fn validate(&self) -> Result<()> {
        let s = self.means.len();
        if s == 0 {
            return Err(Error::InvalidHmm("no states".into()));
        }
        for len in [self.variances.len(), self.initial_dist.len(), self.transitions.rows(), self.transitions.cols()] {
            if len != s {
                return Err(Error::DimensionMismatch { expected: s, actual: len });
            }
        }
        if let Some((j, v)) = self.variances.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidHmm(format!("variance of state {j} is {v}")));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidHmm("non-finite mean".into()));
        }
        check_distribution("initial distribution", &self.initial_dist)?;
        for (i, row) in self.transitions.iter_rows().enumerate() {
            check_distribution(&format!("transition row {i}"), row)?;
        }
        Ok(())
    }
}

fn check_distribution(what: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
        return Err(Error::InvalidHmm(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
        return Err(Error::InvalidHmm(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Index sets of trellis parameters that share one value.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConstraintGroups {
    /// States carrying the same symbol (same mean).
    pub mean_groups: Vec<Vec<usize>>,
    /// States in the same noise state (same variance).
    pub variance_groups: Vec<Vec<usize>>,
    /// Transition entries driven by the same noise-state transition.
    pub transition_groups: Vec<Vec<(usize, usize)>>,
}

impl ConstraintGroups {
    pub fn num_states(&self) -> usize {
        self.mean_groups.iter().map(Vec::len).sum()
    }

    /// Replaces every tied set by its arithmetic mean, in place.
    ///
    /// Means are only tied when `tie_means` is set. Values that are already
    /// equal within a group come out bit-identical.
    pub fn tie(&self, params: &mut HmmParams, tie_means: bool) {
        if tie_means {
            for group in &self.mean_groups {
                let avg = group_mean(group.iter().map(|&j| params.means[j]));
                for &j in group {
                    params.means[j] = avg;
                }
            }
        }
        for group in &self.variance_groups {
            let avg = group_mean(group.iter().map(|&j| params.variances[j]));
            for &j in group {
                params.variances[j] = avg;
            }
        }
        for group in &self.transition_groups {
            let avg = group_mean(group.iter().map(|&(i, j)| params.transitions[(i, j)]));
            for &(i, j) in group {
                params.transitions[(i, j)] = avg;
            }
        }
    }
}

/// Mean taken relative to the first element, so equal inputs are returned
/// exactly.
fn group_mean(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = values.next() else {
        return 0.0;
    };
    let (mut shift, mut count) = (0.0, 1usize);
    for v in values {
        shift += v - first;
        count += 1;
    }
    first + shift / count as f64
}

/// Builds the joint HMM implied by a Markov-Middleton channel.
///
/// `prob_plus_one` is the prior probability of transmitting `+1`.
pub fn build_reference_hmm(p: &MiddletonParams, prob_plus_one: f64) -> Result<HmmParams> {
    if !(prob_plus_one > 0.0 && prob_plus_one < 1.0) {
        return Err(Error::InvalidHmm(format!("symbol prior {prob_plus_one} outside (0, 1)")));
    }
    let w = p.num_noise_states();
    let s = 2 * w;
    let symbol_prob = |j: usize| if j / w == 0 { 1.0 - prob_plus_one } else { prob_plus_one };
    let noise_probs = state_probabilities(p);
    let noise_vars = state_variances(p);
    let noise_trans = noise_transition_matrix(p);

    Ok(HmmParams {
        means: (0..s).map(|j| if j / w == 0 { -1.0 } else { 1.0 }).collect(),
        variances: (0..s).map(|j| noise_vars[j % w]).collect(),
        transitions: Matrix::from_fn(s, s, |i, j| noise_trans[(i % w, j % w)] * symbol_prob(j)),
        initial_dist: (0..s).map(|j| noise_probs[j % w] * symbol_prob(j)).collect(),
    })
}

/// Tied index sets for a BPSK trellis over `num_noise_states` noise states.
pub fn build_constraint_groups(num_noise_states: usize) -> Result<ConstraintGroups> {
    let w = num_noise_states;
    if w < 2 {
        return Err(Error::InvalidNoiseParameter {
            name: "num_noise_states",
            value: w as f64,
            reason: "at least two noise states are required",
        });
    }
    let mean_groups = (0..2).map(|k| (k * w..(k + 1) * w).collect()).collect();
    let variance_groups = (0..w).map(|k| alloc::vec![k, k + w]).collect();
    let mut transition_groups = Vec::with_capacity(w * w);
    for i in 0..w {
        for j in 0..w {
            transition_groups.push(alloc::vec![(i, j), (i, j + w), (i + w, j), (i + w, j + w)]);
        }
    }
    Ok(ConstraintGroups {
        mean_groups,
        variance_groups,
        transition_groups,
    })
}

/// BPSK-maps `bits` (false -> -1, true -> +1) and adds the noise samples.
pub fn transmit(bits: &[bool], noise: &NoiseRealization) -> Result<Vec<f64>> {
    if bits.len() != noise.samples.len() {
        return Err(Error::LengthMismatch {
            expected: bits.len(),
            actual: noise.samples.len(),
        });
    }
    Ok(bits
        .iter()
        .zip(&noise.samples)
        .map(|(&b, &n)| if b { 1.0 + n } else { -1.0 + n })
        .collect())
}
