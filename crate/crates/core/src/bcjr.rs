//! Scaled forward-backward (BCJR) inference for the joint HMM.
//!
//! Forward messages are normalized at every step; the normalizers are the
//! one-step predictive likelihoods, so their logs add up to the sequence
//! log-evidence. The backward messages reuse the same normalizers, which
//! makes `alpha * beta` the state posterior directly.
//!
//! Boundary conditions: `alpha_0(j) = pi_j p(y_0 | j)` and `beta_{T-1} = 1`.
//! `beta_{t}` here summarizes `y_{t+1..T}`; the recursion indexed on
//! `t - 1` with `y_{t..T}` is the same quantity shifted by one step.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{self, KahanSum};
use crate::matrix::Matrix;
use crate::trellis::HmmParams;

/// Relative emission likelihoods are clamped from below to this value.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// How much of the pairwise (transition) posterior to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairwiseMode {
    /// State posteriors and evidence only.
    Skip,
    /// Expected transition counts summed over time (what the M-step uses).
    #[default]
    Summed,
    /// Every `(T - 1) x S x S` slice, plus the summed counts.
    PerStep,
}

/// Output of the E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTables {
    state_post: Matrix,
    pair_post: Option<Vec<f64>>,
    transition_counts: Option<Matrix>,
    log_evidence: f64,
}

impl PosteriorTables {
    /// Assembles tables from explicit posteriors.
    ///
    /// `pair_post[t - 1]` holds `P(s_{t-1} = i, s_t = j | y)` at `(i, j)`.
    pub fn from_posteriors(state_post: Matrix, pair_post: Vec<Matrix>, log_evidence: f64) -> Result<Self> {
        let (len, s) = (state_post.rows(), state_post.cols());
        if len == 0 {
            return Err(Error::EmptySequence);
        }
        if pair_post.len() != len - 1 {
            return Err(Error::LengthMismatch {
                expected: len - 1,
                actual: pair_post.len(),
            });
        }
        let mut counts = Matrix::zeros(s, s);
        let mut flat = Vec::with_capacity(pair_post.len() * s * s);
        for slice in &pair_post {
            if slice.rows() != s || slice.cols() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    actual: slice.rows().max(slice.cols()),
                });
            }
            for i in 0..s {
                for j in 0..s {
                    counts[(i, j)] += slice[(i, j)];
                }
            }
            flat.extend_from_slice(slice.as_slice());
        }
        Ok(Self {
            state_post,
            pair_post: Some(flat),
            transition_counts: Some(counts),
            log_evidence,
        })
    }

    pub fn len(&self) -> usize {
        self.state_post.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_states(&self) -> usize {
        self.state_post.cols()
    }

    /// `T x S` matrix of `P(s_t = j | y)`.
    pub fn state_post(&self) -> &Matrix {
        &self.state_post
    }

    pub fn state_posterior(&self, t: usize) -> &[f64] {
        self.state_post.row(t)
    }

    /// Row-major `S x S` slice of `P(s_{t-1} = i, s_t = j | y)` for
    /// `t` in `1..T`, if per-step storage was requested.
    pub fn pair_posterior(&self, t: usize) -> Option<&[f64]> {
        let s2 = self.num_states() * self.num_states();
        if t == 0 || t >= self.len() {
            return None;
        }
        self.pair_post.as_ref().map(|p| &p[(t - 1) * s2..t * s2])
    }

    /// `sum_t P(s_{t-1} = i, s_t = j | y)`, unless pairwise output was skipped.
    pub fn transition_counts(&self) -> Option<&Matrix> {
        self.transition_counts.as_ref()
    }

    /// `log p(y | theta)`.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }
}

/// Gaussian density of `y` under state `j`.
pub fn emission_likelihood(y: f64, theta: &HmmParams, j: usize) -> f64 {
    let var = theta.variances[j];
    let d = y - theta.means[j];
    math::exp(-d * d / (2.0 * var)) / math::sqrt(2.0 * PI * var)
}

/// Runs the forward-backward recursions over `y` under `theta`.
pub fn forward_backward(y: &[f64], theta: &HmmParams, mode: PairwiseMode) -> Result<PosteriorTables> {
    theta.validate()?;
    let len = y.len();
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    let s = theta.num_states();
    let trans = &theta.transitions;

    // Emissions are stored relative to the per-step maximum; the shift goes
    // back into the evidence.
    let log_norm: Vec<f64> = theta.variances.iter().map(|&v| -0.5 * math::ln(2.0 * PI * v)).collect();
    let half_precision: Vec<f64> = theta.variances.iter().map(|&v| 0.5 / v).collect();
    let mut emis = vec![0.0; len * s];
    let mut log_shift = vec![0.0; len];
    let mut scratch = vec![0.0; s];
    for (t, &yt) in y.iter().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for j in 0..s {
            let d = yt - theta.means[j];
            let l = log_norm[j] - d * d * half_precision[j];
            scratch[j] = l;
            if l > max {
                max = l;
            }
        }
        if !max.is_finite() {
            return Err(Error::Underflow { t });
        }
        log_shift[t] = max;
        for (e, &l) in emis[t * s..(t + 1) * s].iter_mut().zip(&scratch) {
            *e = math::exp(l - max).max(LIKELIHOOD_FLOOR);
        }
    }

    // forward
    let mut alpha = vec![0.0; len * s];
    let mut scale = vec![0.0; len];
    for j in 0..s {
        alpha[j] = theta.initial_dist[j] * emis[j];
    }
    scale[0] = normalize(&mut alpha[..s]).ok_or(Error::Underflow { t: 0 })?;
    for t in 1..len {
        let (prev, cur) = alpha[(t - 1) * s..(t + 1) * s].split_at_mut(s);
        cur.fill(0.0);
        for (i, &a) in prev.iter().enumerate() {
            for (c, &p) in cur.iter_mut().zip(trans.row(i)) {
                *c += a * p;
            }
        }
        for (c, &e) in cur.iter_mut().zip(&emis[t * s..(t + 1) * s]) {
            *c *= e;
        }
        scale[t] = normalize(cur).ok_or(Error::Underflow { t })?;
    }
    let mut evidence = KahanSum::default();
    for (c, shift) in scale.iter().zip(&log_shift) {
        evidence.add(math::ln(*c) + shift);
    }

    // backward, turning alpha into the state posterior in place
    let keep_pairs = mode != PairwiseMode::Skip;
    let mut pair_post = (mode == PairwiseMode::PerStep).then(|| vec![0.0; (len - 1) * s * s]);
    let mut counts = keep_pairs.then(|| Matrix::zeros(s, s));
    let mut beta = vec![1.0; s];
    let mut next_beta = vec![0.0; s];
    let mut weighted = vec![0.0; s];
    let mut xi = vec![0.0; s * s];
    for t in (0..len).rev() {
        if t > 0 {
            // weighted[j] = p(y_t | j) beta_t(j) / c_t
            let e = &emis[t * s..(t + 1) * s];
            for j in 0..s {
                weighted[j] = e[j] * beta[j] / scale[t];
            }
            if keep_pairs {
                let prev = &alpha[(t - 1) * s..t * s];
                for i in 0..s {
                    for j in 0..s {
                        xi[i * s + j] = prev[i] * trans[(i, j)] * weighted[j];
                    }
                }
                normalize(&mut xi).ok_or(Error::Underflow { t })?;
                if let Some(store) = pair_post.as_mut() {
                    store[(t - 1) * s * s..t * s * s].copy_from_slice(&xi);
                }
                if let Some(counts) = counts.as_mut() {
                    for i in 0..s {
                        for (c, &x) in counts.row_mut(i).iter_mut().zip(&xi[i * s..(i + 1) * s]) {
                            *c += x;
                        }
                    }
                }
            }
        }
        let post = &mut alpha[t * s..(t + 1) * s];
        for (p, &b) in post.iter_mut().zip(&beta) {
            *p *= b;
        }
        normalize(post).ok_or(Error::Underflow { t })?;
        if t > 0 {
            for (nb, row) in next_beta.iter_mut().zip(trans.iter_rows()) {
                *nb = row.iter().zip(&weighted).map(|(p, w)| p * w).sum();
            }
            core::mem::swap(&mut beta, &mut next_beta);
        }
    }

    let state_post = Matrix::from_rows(alpha.chunks_exact(s).map(<[f64]>::to_vec).collect())?;
    Ok(PosteriorTables {
        state_post,
        pair_post,
        transition_counts: counts,
        log_evidence: evidence.total(),
    })
}

/// Scales `values` to sum to one and returns the original sum, or `None`
/// when the sum is zero or not finite.
fn normalize(values: &mut [f64]) -> Option<f64> {
    let total: f64 = values.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let inv = 1.0 / total;
    for v in values.iter_mut() {
        *v *= inv;
    }
    Some(total)
}

/// Marginalizes state posteriors onto the transmitted symbol: column 0 is
/// `P(x_t = -1 | y)`, column 1 is `P(x_t = +1 | y)`.
pub fn symbol_posteriors(tables: &PosteriorTables, num_noise_states: usize) -> Result<Matrix> {
    let w = num_noise_states;
    if tables.num_states() != 2 * w {
        return Err(Error::DimensionMismatch {
            expected: 2 * w,
            actual: tables.num_states(),
        });
    }
    let post = tables.state_post();
    Ok(Matrix::from_fn(tables.len(), 2, |t, k| post.row(t)[k * w..(k + 1) * w].iter().sum()))
}
