//! Estimation-quality metrics against a reference parameter set.

use crate::error::{Error, Result};
use crate::math;
use crate::trellis::HmmParams;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub nmse_variance: f64,
    pub kl_transition: f64,
}

impl MetricReport {
    pub fn compare(reference: &HmmParams, estimate: &HmmParams) -> Result<Self> {
        Ok(Self {
            nmse_variance: nmse_variances(estimate, reference)?,
            kl_transition: kl_transitions(reference, estimate)?,
        })
    }
}

/// `(1/S) sum_j (est_j - ref_j)^2 / ref_j^2` over the state variances.
pub fn nmse_variances(estimate: &HmmParams, reference: &HmmParams) -> Result<f64> {
    let s = reference.variances.len();
    if estimate.variances.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            actual: estimate.variances.len(),
        });
    }
    let total: f64 = estimate
        .variances
        .iter()
        .zip(&reference.variances)
        .map(|(e, r)| {
            let rel = (e - r) / r;
            rel * rel
        })
        .sum();
    Ok(total / s as f64)
}

/// `sum_{i,j} P_ij ln(P_ij / Q_ij)` over every matrix entry, with `P` the
/// reference and `Q` the estimate. Equals the unweighted sum of the per-row
/// divergences. Entries with `P_ij = 0` contribute nothing.
pub fn kl_transitions(reference: &HmmParams, estimate: &HmmParams) -> Result<f64> {
    let (rt, et) = (&reference.transitions, &estimate.transitions);
    if rt.rows() != et.rows() || rt.cols() != et.cols() {
        return Err(Error::DimensionMismatch {
            expected: rt.rows(),
            actual: et.rows(),
        });
    }
    let mut total = 0.0;
    for i in 0..rt.rows() {
        for j in 0..rt.cols() {
            let (p, q) = (rt[(i, j)], et[(i, j)]);
            if p == 0.0 {
                continue;
            }
            if q <= 0.0 {
                return Err(Error::InfiniteDivergence { row: i, col: j });
            }
            total += p * math::ln(p / q);
        }
    }
    // per-row sums can round a hair below zero
    Ok(total.max(0.0))
}
