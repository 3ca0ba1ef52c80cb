//! Monte Carlo trials and their aggregation.
//!
//! Each trial draws its own bits and noise from a ChaCha8 stream selected by
//! `(base_seed, trial_index)`, so a trial is reproducible on its own and the
//! same trial index sees the same frame at every sweep point. All variants
//! of a trial run on that same frame.
//!
//! Runs that stop before the longest run in the batch keep contributing their
//! final metric value to later iterations of the aggregated curves.

use mmem_core::{
    build_constraint_groups, build_reference_hmm, generate_noise_with, run_em, transmit, EmVariant,
    HmmParams, MetricReport, StopReason,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, InitialGuess, SweepParam};
use crate::error::HarnessError;
use crate::stats::Summary;

/// Prior probability of a `+1` symbol.
const SYMBOL_PRIOR: f64 = 0.5;

/// One EM run inside a trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantRun {
    pub variant: EmVariant,
    /// Metrics of every iterate, starting with the initial guess.
    pub metrics: Vec<MetricReport>,
    pub log_evidence: Vec<f64>,
    /// EM updates performed.
    pub updates: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub warnings: usize,
    pub error: Option<String>,
    pub final_params: Option<HmmParams>,
}

impl VariantRun {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub runs: Vec<VariantRun>,
}

impl TrialRecord {
    pub fn run(&self, variant: EmVariant) -> Option<&VariantRun> {
        self.runs.iter().find(|r| r.variant == variant)
    }
}

/// Deterministic generator for one trial.
pub fn trial_rng(base_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(trial_index);
    rng
}

/// Received frame of one trial: uniform bits through the reference channel.
pub fn trial_observations(cfg: &ExperimentConfig, trial_index: u64) -> Result<Vec<f64>, HarnessError> {
    let mut rng = trial_rng(cfg.base_seed, trial_index);
    let bits: Vec<bool> = (0..cfg.frame_length).map(|_| rng.random()).collect();
    let noise = generate_noise_with(&cfg.reference_params, cfg.frame_length, &mut rng)?;
    Ok(transmit(&bits, &noise)?)
}

pub fn reference_params(cfg: &ExperimentConfig) -> Result<HmmParams, HarnessError> {
    Ok(build_reference_hmm(&cfg.reference_params, SYMBOL_PRIOR)?)
}

pub fn initial_params(cfg: &ExperimentConfig) -> Result<HmmParams, HarnessError> {
    match &cfg.init {
        InitialGuess::Middleton(p) => Ok(build_reference_hmm(p, SYMBOL_PRIOR)?),
        InitialGuess::Explicit(theta) => Ok(theta.clone()),
    }
}

/// Runs every configured variant on the frame of `trial_index`.
///
/// Numerical failures are recorded in the returned runs; only an invalid
/// configuration is an error.
pub fn run_trial(cfg: &ExperimentConfig, trial_index: u64) -> Result<TrialRecord, HarnessError> {
    let y = trial_observations(cfg, trial_index)?;
    let reference = reference_params(cfg)?;
    let init = initial_params(cfg)?;
    let groups = build_constraint_groups(cfg.reference_params.num_noise_states())?;

    let mut runs = Vec::with_capacity(cfg.variants.len());
    for &variant in &cfg.variants {
        let em_cfg = cfg.em_config.clone().with_variant(variant);
        let trace = run_em(&y, &init, &groups, &em_cfg)?;
        let mut error = trace.error.as_ref().map(ToString::to_string);
        let mut metrics = Vec::with_capacity(trace.iterations.len());
        for record in &trace.iterations {
            match MetricReport::compare(&reference, &record.params) {
                Ok(m) => metrics.push(m),
                Err(e) => {
                    error.get_or_insert_with(|| format!("iteration {}: {e}", record.iteration));
                    break;
                }
            }
        }
        runs.push(VariantRun {
            variant,
            metrics,
            log_evidence: trace.log_evidences().collect(),
            updates: trace.num_updates(),
            converged: trace.converged,
            stop_reason: trace.stop_reason,
            warnings: trace.warnings.len(),
            error,
            final_params: trace.final_params().cloned(),
        });
    }
    Ok(TrialRecord { trial_index, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub nmse: Summary,
    pub kl: Summary,
    /// Trials that met the threshold at or before this iteration.
    pub trials_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial_index: u64,
    pub updates: usize,
    pub converged: bool,
    pub final_nmse: Option<f64>,
    pub final_kl: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: EmVariant,
    pub trials_ok: usize,
    pub trials_failed: usize,
    /// Of the successful trials.
    pub trials_converged: usize,
    pub curve: Vec<IterationStats>,
    pub final_nmse: Summary,
    pub final_kl: Summary,
    /// EM updates until the run stopped.
    pub iterations: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<Vec<TrialSummary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPointResult {
    pub swept_param: Option<SweepParam>,
    pub swept_value: Option<f64>,
    pub variants: Vec<VariantSummary>,
}

impl SweepPointResult {
    pub fn variant(&self, variant: EmVariant) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == variant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub points: Vec<SweepPointResult>,
}

/// Runs all trials (in parallel) at every sweep point and aggregates them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let points: Vec<(Option<SweepParam>, Option<f64>, ExperimentConfig)> = match &cfg.sweep {
        Some(sweep) => sweep
            .values
            .iter()
            .map(|&v| Ok((Some(sweep.param), Some(v), cfg.at_sweep_point(sweep.param, v)?)))
            .collect::<Result<_, HarnessError>>()?,
        None => vec![(None, None, cfg.clone())],
    };

    let mut results = Vec::with_capacity(points.len());
    for (param, value, point_cfg) in points {
        let trials = (0..point_cfg.num_trials as u64)
            .into_par_iter()
            .map(|i| run_trial(&point_cfg, i))
            .collect::<Result<Vec<_>, _>>()?;
        let mut variants = Vec::with_capacity(cfg.variants.len());
        for &variant in &cfg.variants {
            let summary = summarize(&trials, variant, cfg.record_trials).ok_or_else(|| {
                let at = match (param, value) {
                    (Some(p), Some(v)) => format!(" at {p} = {v}"),
                    _ => String::new(),
                };
                HarnessError::AllTrialsFailed {
                    what: format!("the {variant} variant{at}"),
                    trials: trials.len(),
                }
            })?;
            variants.push(summary);
        }
        results.push(SweepPointResult {
            swept_param: param,
            swept_value: value,
            variants,
        });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        points: results,
    })
}

/// Aggregates one variant across trials; `None` if every trial failed.
pub fn summarize(trials: &[TrialRecord], variant: EmVariant, keep_trials: bool) -> Option<VariantSummary> {
    let runs: Vec<&VariantRun> = trials.iter().filter_map(|t| t.run(variant)).collect();
    let ok: Vec<&VariantRun> = runs.iter().copied().filter(|r| !r.failed()).collect();
    if ok.is_empty() {
        return None;
    }
    let length = ok.iter().map(|r| r.metrics.len()).max().unwrap_or(0);
    let at = |r: &VariantRun, i: usize| r.metrics[i.min(r.metrics.len() - 1)];

    let curve = (0..length)
        .map(|i| {
            let nmse: Vec<f64> = ok.iter().map(|r| at(r, i).nmse_variance).collect();
            let kl: Vec<f64> = ok.iter().map(|r| at(r, i).kl_transition).collect();
            IterationStats {
                iteration: i,
                nmse: Summary::of(&nmse).expect("non-empty"),
                kl: Summary::of(&kl).expect("non-empty"),
                trials_converged: ok.iter().filter(|r| r.converged && r.updates <= i).count(),
            }
        })
        .collect();

    let finals = |f: fn(&MetricReport) -> f64| -> Vec<f64> {
        ok.iter().map(|r| f(r.metrics.last().expect("non-empty"))).collect()
    };
    let iterations: Vec<f64> = ok.iter().map(|r| r.updates as f64).collect();
    let trial_summaries = keep_trials.then(|| {
        trials
            .iter()
            .filter_map(|t| t.run(variant).map(|r| (t.trial_index, r)))
            .map(|(trial_index, r)| TrialSummary {
                trial_index,
                updates: r.updates,
                converged: r.converged,
                final_nmse: r.metrics.last().map(|m| m.nmse_variance),
                final_kl: r.metrics.last().map(|m| m.kl_transition),
                error: r.error.clone(),
            })
            .collect()
    });

    Some(VariantSummary {
        variant,
        trials_ok: ok.len(),
        trials_failed: runs.len() - ok.len(),
        trials_converged: ok.iter().filter(|r| r.converged).count(),
        curve,
        final_nmse: Summary::of(&finals(|m| m.nmse_variance)).expect("non-empty"),
        final_kl: Summary::of(&finals(|m| m.kl_transition)).expect("non-empty"),
        iterations: Summary::of(&iterations).expect("non-empty"),
        trials: trial_summaries,
    })
}
