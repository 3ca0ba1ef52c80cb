//! Markov-Middleton impulsive noise: closed-form state statistics and
//! sequence generation.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// Physical parameters of a Markov-Middleton channel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "raw::RawMiddletonParams")
)]
pub struct MiddletonParams {
    impulsive_index: f64,
    power_ratio: f64,
    correlation: f64,
    num_noise_states: usize,
    background_variance: f64,
}

impl MiddletonParams {
    /// Validates and builds a parameter set.
    ///
    /// `impulsive_index` (A) and `power_ratio` (Λ) must be positive,
    /// `correlation` (r) must lie in `[0, 1)`, at least two noise states are
    /// required and the background variance must be positive.
    pub fn new(
        impulsive_index: f64,
        power_ratio: f64,
        correlation: f64,
        num_noise_states: usize,
        background_variance: f64,
    ) -> Result<Self> {
        fn positive(name: &'static str, value: f64) -> Result<()> {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidNoiseParameter {
                    name,
                    value,
                    reason: "must be finite and positive",
                })
            }
        }
        positive("impulsive_index", impulsive_index)?;
        positive("power_ratio", power_ratio)?;
        positive("background_variance", background_variance)?;
        if !(0.0..1.0).contains(&correlation) {
            return Err(Error::InvalidNoiseParameter {
                name: "correlation",
                value: correlation,
                reason: "must lie in [0, 1)",
            });
        }
        if num_noise_states < 2 {
            return Err(Error::InvalidNoiseParameter {
                name: "num_noise_states",
                value: num_noise_states as f64,
                reason: "at least two noise states are required",
            });
        }
        Ok(Self {
            impulsive_index,
            power_ratio,
            correlation,
            num_noise_states,
            background_variance,
        })
    }

    /// Two-state model with unit background variance.
    pub fn two_state(impulsive_index: f64, power_ratio: f64, correlation: f64) -> Result<Self> {
        Self::new(impulsive_index, power_ratio, correlation, 2, 1.0)
    }

    pub fn impulsive_index(&self) -> f64 {
        self.impulsive_index
    }

    pub fn power_ratio(&self) -> f64 {
        self.power_ratio
    }

    pub fn correlation(&self) -> f64 {
        self.correlation
    }

    pub fn num_noise_states(&self) -> usize {
        self.num_noise_states
    }

    pub fn background_variance(&self) -> f64 {
        self.background_variance
    }

    pub fn with_impulsive_index(self, value: f64) -> Result<Self> {
        Self::new(value, self.power_ratio, self.correlation, self.num_noise_states, self.background_variance)
    }

    pub fn with_power_ratio(self, value: f64) -> Result<Self> {
        Self::new(self.impulsive_index, value, self.correlation, self.num_noise_states, self.background_variance)
    }

    pub fn with_correlation(self, value: f64) -> Result<Self> {
        Self::new(self.impulsive_index, self.power_ratio, value, self.num_noise_states, self.background_variance)
    }
}

#[cfg(feature = "serde")]
mod raw {
    use super::MiddletonParams;
    use crate::error::Error;

    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    pub(super) struct RawMiddletonParams {
        impulsive_index: f64,
        power_ratio: f64,
        correlation: f64,
        #[serde(default = "default_num_noise_states")]
        num_noise_states: usize,
        #[serde(default = "default_background_variance")]
        background_variance: f64,
    }

    fn default_num_noise_states() -> usize {
        2
    }

    fn default_background_variance() -> f64 {
        1.0
    }

    impl TryFrom<RawMiddletonParams> for MiddletonParams {
        type Error = Error;

        fn try_from(raw: RawMiddletonParams) -> Result<Self, Error> {
            Self::new(
                raw.impulsive_index,
                raw.power_ratio,
                raw.correlation,
                raw.num_noise_states,
                raw.background_variance,
            )
        }
    }
}

/// One realization of the noise process.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub states: Vec<usize>,
    pub samples: Vec<f64>,
}

impl NoiseRealization {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Truncated-Poisson occupation probabilities `P(w = j)`, `j = 0..W`.
///
/// The Poisson weights are formed in log space and normalized after
/// subtracting the maximum, so large `W` does not overflow.
pub fn state_probabilities(p: &MiddletonParams) -> Vec<f64> {
    let a = p.impulsive_index;
    let ln_a = math::ln(a);
    let log_weights: Vec<f64> = (0..p.num_noise_states)
        .map(|j| -a + j as f64 * ln_a - math::ln_factorial(j))
        .collect();
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_weights.iter().map(|&lw| math::exp(lw - max)).collect();
    let total: f64 = probs.iter().sum();
    for q in &mut probs {
        *q /= total;
    }
    probs
}

/// Per-state noise variances `(1 + jΛ/A) σ²_0`.
pub fn state_variances(p: &MiddletonParams) -> Vec<f64> {
    (0..p.num_noise_states)
        .map(|j| {
            if j == 0 {
                p.background_variance
            } else {
                (1.0 + j as f64 * p.power_ratio / p.impulsive_index) * p.background_variance
            }
        })
        .collect()
}

/// Noise-state transition matrix: `r` extra mass on the diagonal, the rest
/// spread according to the stationary probabilities.
pub fn noise_transition_matrix(p: &MiddletonParams) -> Matrix {
    let probs = state_probabilities(p);
    let r = p.correlation;
    Matrix::from_fn(p.num_noise_states, p.num_noise_states, |i, j| {
        let base = (1.0 - r) * probs[j];
        if i == j {
            r + base
        } else {
            base
        }
    })
}

/// Generates `len` noise samples with a ChaCha8 stream seeded from `seed`.
pub fn generate_noise(p: &MiddletonParams, len: usize, seed: u64) -> Result<NoiseRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_noise_with(p, len, &mut rng)
}

/// Generates `len` noise samples from the supplied generator.
///
/// The first state is drawn from the stationary distribution, later states
/// from the rows of the transition matrix.
pub fn generate_noise_with<R: Rng + ?Sized>(
    p: &MiddletonParams,
    len: usize,
    rng: &mut R,
) -> Result<NoiseRealization> {
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    let stationary = cumulative(&state_probabilities(p));
    let transitions = noise_transition_matrix(p);
    let rows: Vec<Vec<f64>> = transitions.iter_rows().map(cumulative).collect();
    let std_devs: Vec<f64> = state_variances(p).into_iter().map(math::sqrt).collect();

    let mut states = Vec::with_capacity(len);
    let mut samples = Vec::with_capacity(len);
    let mut state = draw(&stationary, rng);
    for t in 0..len {
        if t > 0 {
            state = draw(&rows[state], rng);
        }
        let z: f64 = rng.sample(StandardNormal);
        states.push(state);
        samples.push(z * std_devs[state]);
    }
    Ok(NoiseRealization { states, samples })
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|&q| {
            acc += q;
            acc
        })
        .collect()
}

fn draw<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}
