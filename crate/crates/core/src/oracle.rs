//! Exhaustive path enumeration over all `S^T` state sequences.
//!
//! Test-only reference for the recursive E-step; exponential in `T`.

use alloc::vec;
use alloc::vec::Vec;

use crate::trellis::HmmParams;

/// Posteriors and evidence obtained by summing `p(y, s)` over every path.
#[derive(Debug, Clone)]
pub struct Enumerated {
    /// `state_post[t][j] = P(s_t = j | y)`.
    pub state_post: Vec<Vec<f64>>,
    /// `pair_post[t - 1][i][j] = P(s_{t-1} = i, s_t = j | y)`.
    pub pair_post: Vec<Vec<Vec<f64>>>,
    pub log_evidence: f64,
}

fn density(y: f64, mean: f64, var: f64) -> f64 {
    libm::exp(-(y - mean) * (y - mean) / (2.0 * var)) / libm::sqrt(2.0 * core::f64::consts::PI * var)
}

pub fn enumerate(y: &[f64], theta: &HmmParams) -> Enumerated {
    let s = theta.num_states();
    let len = y.len();
    assert!((1..=12).contains(&len), "enumeration is only feasible for short sequences");
    let mut state_post = vec![vec![0.0; s]; len];
    let mut pair_post = vec![vec![vec![0.0; s]; s]; len.saturating_sub(1)];
    let mut evidence = 0.0;
    let mut path = vec![0usize; len];
    let total_paths = s.pow(len as u32);
    for code in 0..total_paths {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % s;
            c /= s;
        }
        let mut weight = theta.initial_dist[path[0]] * density(y[0], theta.means[path[0]], theta.variances[path[0]]);
        for t in 1..len {
            weight *= theta.transitions[(path[t - 1], path[t])]
                * density(y[t], theta.means[path[t]], theta.variances[path[t]]);
        }
        evidence += weight;
        for t in 0..len {
            state_post[t][path[t]] += weight;
            if t > 0 {
                pair_post[t - 1][path[t - 1]][path[t]] += weight;
            }
        }
    }
    for row in &mut state_post {
        row.iter_mut().for_each(|p| *p /= evidence);
    }
    for slice in &mut pair_post {
        slice.iter_mut().flatten().for_each(|p| *p /= evidence);
    }
    Enumerated {
        state_post,
        pair_post,
        log_evidence: libm::log(evidence),
    }
}
