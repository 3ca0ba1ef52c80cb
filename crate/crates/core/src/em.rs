//! Baum-Welch estimation with the standard or the tied (constrained) M-step.

use alloc::format;
use alloc::vec::Vec;
use core::time::Duration;

use crate::bcjr::{forward_backward, PairwiseMode, PosteriorTables};
use crate::error::{Error, Result};
use crate::trellis::{ConstraintGroups, HmmParams};

/// States (or transition rows) with less posterior mass than this keep
/// their previous estimate.
pub const MIN_POSTERIOR_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum EmVariant {
    Standard,
    Constrained,
}

impl EmVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            EmVariant::Standard => "standard",
            EmVariant::Constrained => "constrained",
        }
    }
}

impl core::fmt::Display for EmVariant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the convergence threshold is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum ThresholdScale {
    /// Gain of the total log-evidence `log p(y | theta)`.
    Total,
    /// Gain of the log-evidence divided by the frame length.
    #[default]
    PerSample,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct EmConfig {
    pub variant: EmVariant,
    /// Re-estimate the Gaussian means. Off by default: BPSK means are known.
    pub estimate_means: bool,
    /// Stop once the log-evidence improves by less than this.
    pub convergence_threshold: f64,
    pub threshold_scale: ThresholdScale,
    pub max_iterations: usize,
    pub variance_floor: f64,
    pub transition_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            variant: EmVariant::Constrained,
            estimate_means: false,
            convergence_threshold: 1e-6,
            threshold_scale: ThresholdScale::PerSample,
            max_iterations: 100,
            variance_floor: 1e-6,
            transition_floor: 0.0,
        }
    }
}

impl EmConfig {
    pub fn with_variant(mut self, variant: EmVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.convergence_threshold.is_nan() || self.convergence_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "convergence threshold must be positive, got {}",
                self.convergence_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "variance floor must be positive, got {}",
                self.variance_floor
            )));
        }
        if !(0.0..1.0).contains(&self.transition_floor) {
            return Err(Error::InvalidConfig(format!(
                "transition floor must lie in [0, 1), got {}",
                self.transition_floor
            )));
        }
        Ok(())
    }
}

/// Non-fatal events from an M-step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum EmWarning {
    /// Mean and variance of `state` were left unchanged.
    StarvedState { state: usize, mass: f64 },
    /// Transition row `row` was left unchanged.
    StarvedRow { row: usize, mass: f64 },
}

/// Result of one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub params: HmmParams,
    pub warnings: Vec<EmWarning>,
}

fn check_shapes(y: &[f64], tables: &PosteriorTables, prev: &HmmParams) -> Result<()> {
    if tables.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: tables.len(),
        });
    }
    if tables.num_states() != prev.num_states() {
        return Err(Error::DimensionMismatch {
            expected: prev.num_states(),
            actual: tables.num_states(),
        });
    }
    Ok(())
}

/// Maximum-likelihood update of means, variances and transitions from the
/// E-step posteriors. The initial distribution is passed through.
pub fn m_step_standard(y: &[f64], tables: &PosteriorTables, prev: &HmmParams, cfg: &EmConfig) -> Result<MStep> {
    check_shapes(y, tables, prev)?;
    let counts = tables.transition_counts().ok_or(Error::MissingPairwisePosteriors)?;
    let s = prev.num_states();
    let post = tables.state_post();
    let mut params = prev.clone();
    let mut warnings = Vec::new();

    let mut mass = alloc::vec![0.0; s];
    let mut first_moment = alloc::vec![0.0; s];
    for (row, &yt) in post.iter_rows().zip(y) {
        for j in 0..s {
            mass[j] += row[j];
            first_moment[j] += row[j] * yt;
        }
    }
    let starved: Vec<bool> = mass.iter().map(|&m| m < MIN_POSTERIOR_MASS).collect();
    for j in 0..s {
        if starved[j] {
            warnings.push(EmWarning::StarvedState { state: j, mass: mass[j] });
        } else if cfg.estimate_means {
            params.means[j] = first_moment[j] / mass[j];
        }
    }

    let mut second_moment = alloc::vec![0.0; s];
    for (row, &yt) in post.iter_rows().zip(y) {
        for j in 0..s {
            let d = yt - params.means[j];
            second_moment[j] += row[j] * d * d;
        }
    }
    for j in (0..s).filter(|&j| !starved[j]) {
        params.variances[j] = (second_moment[j] / mass[j]).max(cfg.variance_floor);
    }

    for i in 0..s {
        let expected = counts.row(i);
        let row_mass: f64 = expected.iter().sum();
        if row_mass < MIN_POSTERIOR_MASS {
            warnings.push(EmWarning::StarvedRow { row: i, mass: row_mass });
            continue;
        }
        let row = params.transitions.row_mut(i);
        for (p, &c) in row.iter_mut().zip(expected) {
            *p = (c / row_mass).max(cfg.transition_floor);
        }
        renormalize(row);
    }

    Ok(MStep { params, warnings })
}

/// Standard update followed by averaging every tied group, then row
/// renormalization of the transition matrix.
pub fn m_step_constrained(
    y: &[f64],
    tables: &PosteriorTables,
    prev: &HmmParams,
    groups: &ConstraintGroups,
    cfg: &EmConfig,
) -> Result<MStep> {
    if groups.num_states() != prev.num_states() {
        return Err(Error::DimensionMismatch {
            expected: prev.num_states(),
            actual: groups.num_states(),
        });
    }
    let mut step = m_step_standard(y, tables, prev, cfg)?;
    groups.tie(&mut step.params, cfg.estimate_means);
    for i in 0..step.params.num_states() {
        renormalize(step.params.transitions.row_mut(i));
    }
    Ok(step)
}

fn renormalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.iter_mut().for_each(|p| *p /= total);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum StopReason {
    Threshold,
    MaxIterations,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IterationRecord {
    /// 0 is the initial guess.
    pub iteration: usize,
    pub params: HmmParams,
    pub log_evidence: f64,
    /// Time spent on the M-step and E-step producing this record; `None`
    /// without a clock (`no_std`).
    pub elapsed: Option<Duration>,
}

/// Per-iteration history of one EM run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EmTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// `(iteration, warning)` pairs.
    pub warnings: Vec<(usize, EmWarning)>,
    #[cfg_attr(feature = "serde", serde(serialize_with = "serialize_error"))]
    pub error: Option<Error>,
}

#[cfg(feature = "serde")]
fn serialize_error<S: serde::Serializer>(error: &Option<Error>, ser: S) -> core::result::Result<S::Ok, S::Error> {
    use alloc::string::ToString;
    match error {
        Some(e) => ser.serialize_some(&e.to_string()),
        None => ser.serialize_none(),
    }
}

impl EmTrace {
    /// Number of EM updates performed (the initial guess is not counted).
    pub fn num_updates(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    pub fn final_params(&self) -> Option<&HmmParams> {
        self.iterations.last().map(|r| &r.params)
    }

    pub fn log_evidences(&self) -> impl Iterator<Item = f64> + '_ {
        self.iterations.iter().map(|r| r.log_evidence)
    }
}

#[cfg(feature = "std")]
struct Stopwatch(std::time::Instant);

#[cfg(feature = "std")]
impl Stopwatch {
    fn start() -> Self {
        Self(std::time::Instant::now())
    }

    fn elapsed(&self) -> Option<Duration> {
        Some(self.0.elapsed())
    }
}

#[cfg(not(feature = "std"))]
struct Stopwatch;

#[cfg(not(feature = "std"))]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch
    }

    fn elapsed(&self) -> Option<Duration> {
        None
    }
}

/// Alternates E- and M-steps from `init` until the evidence gain drops
/// below the threshold (a decrease also stops the run) or the iteration
/// budget is spent.
///
/// Invalid inputs are returned as errors. A numerical failure during the
/// run ends it with [`StopReason::Error`] and keeps the partial trace.
/// `groups` is only consulted by the constrained variant.
pub fn run_em(y: &[f64], init: &HmmParams, groups: &ConstraintGroups, cfg: &EmConfig) -> Result<EmTrace> {
    cfg.validate()?;
    init.validate()?;
    if y.is_empty() {
        return Err(Error::EmptySequence);
    }
    if cfg.variant == EmVariant::Constrained && groups.num_states() != init.num_states() {
        return Err(Error::DimensionMismatch {
            expected: init.num_states(),
            actual: groups.num_states(),
        });
    }

    let mut trace = EmTrace {
        iterations: Vec::new(),
        converged: false,
        stop_reason: StopReason::MaxIterations,
        warnings: Vec::new(),
        error: None,
    };
    let fail = |mut trace: EmTrace, err: Error| {
        trace.stop_reason = StopReason::Error;
        trace.error = Some(err);
        trace
    };

    let clock = Stopwatch::start();
    let mut tables = match forward_backward(y, init, PairwiseMode::Summed) {
        Ok(t) => t,
        Err(e) => return Ok(fail(trace, e)),
    };
    trace.iterations.push(IterationRecord {
        iteration: 0,
        params: init.clone(),
        log_evidence: tables.log_evidence(),
        elapsed: clock.elapsed(),
    });

    for iteration in 1..=cfg.max_iterations {
        let clock = Stopwatch::start();
        let current = &trace.iterations[iteration - 1].params;
        let step = match cfg.variant {
            EmVariant::Standard => m_step_standard(y, &tables, current, cfg),
            EmVariant::Constrained => m_step_constrained(y, &tables, current, groups, cfg),
        };
        let step = match step {
            Ok(s) => s,
            Err(e) => return Ok(fail(trace, e)),
        };
        trace.warnings.extend(step.warnings.iter().map(|&w| (iteration, w)));
        let next_tables = match forward_backward(y, &step.params, PairwiseMode::Summed) {
            Ok(t) => t,
            Err(e) => return Ok(fail(trace, e)),
        };
        let mut gain = next_tables.log_evidence() - tables.log_evidence();
        if cfg.threshold_scale == ThresholdScale::PerSample {
            gain /= y.len() as f64;
        }
        trace.iterations.push(IterationRecord {
            iteration,
            params: step.params,
            log_evidence: next_tables.log_evidence(),
            elapsed: clock.elapsed(),
        });
        tables = next_tables;
        if gain < cfg.convergence_threshold {
            trace.converged = true;
            trace.stop_reason = StopReason::Threshold;
            break;
        }
    }
    Ok(trace)
}
