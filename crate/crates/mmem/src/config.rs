//! Experiment configuration, loadable from JSON.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mmem_core::{EmConfig, EmVariant, HmmParams, MiddletonParams};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Frame length used in the published experiments.
pub const DEFAULT_FRAME_LENGTH: usize = 32768;
pub const DEFAULT_TRIALS: usize = 100;
pub const FULL_SCALE_TRIALS: usize = 10_000;

/// Starting point of every EM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Closed-form parameters of an assumed channel.
    Middleton(MiddletonParams),
    /// An explicit parameter set.
    Explicit(HmmParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "A")]
    ImpulsiveIndex,
    #[serde(rename = "lambda")]
    PowerRatio,
    #[serde(rename = "r")]
    Correlation,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::ImpulsiveIndex => "A",
            SweepParam::PowerRatio => "lambda",
            SweepParam::Correlation => "r",
        }
    }

    pub fn read(self, p: &MiddletonParams) -> f64 {
        match self {
            SweepParam::ImpulsiveIndex => p.impulsive_index(),
            SweepParam::PowerRatio => p.power_ratio(),
            SweepParam::Correlation => p.correlation(),
        }
    }

    pub fn apply(self, p: MiddletonParams, value: f64) -> Result<MiddletonParams, mmem_core::Error> {
        match self {
            SweepParam::ImpulsiveIndex => p.with_impulsive_index(value),
            SweepParam::PowerRatio => p.with_power_ratio(value),
            SweepParam::Correlation => p.with_correlation(value),
        }
    }

    /// Grid used by `robustness` when no explicit sweep is given.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::ImpulsiveIndex => vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            SweepParam::PowerRatio => vec![2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            SweepParam::Correlation => vec![0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9],
        }
    }

    pub const ALL: [SweepParam; 3] = [SweepParam::ImpulsiveIndex, SweepParam::PowerRatio, SweepParam::Correlation];
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(SweepParam::ImpulsiveIndex),
            "lambda" | "Lambda" | "L" | "Λ" => Ok(SweepParam::PowerRatio),
            "r" | "R" => Ok(SweepParam::Correlation),
            other => Err(HarnessError::Config(format!(
                "unknown sweep parameter `{other}` (expected A, lambda or r)"
            ))),
        }
    }
}

/// Values substituted one at a time into the initial guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = HarnessError;

    /// Parses `param=v1,v2,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("sweep `{s}` is not of the form param=v1,v2,...")))?;
        let param = name.trim().parse()?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| HarnessError::Config(format!("bad sweep value `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Sweep { param, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Channel that generates the data and defines the metric reference.
    pub reference_params: MiddletonParams,
    pub init: InitialGuess,
    pub frame_length: usize,
    pub num_trials: usize,
    pub base_seed: u64,
    pub em_config: EmConfig,
    pub sweep: Option<Sweep>,
    pub variants: Vec<EmVariant>,
    /// Keep per-trial summaries in the result (JSON output only).
    pub record_trials: bool,
}

impl Default for ExperimentConfig {
    /// Convergence setup: reference (A, Λ, r) = (0.3, 10, 0.9), initial
    /// guess (0.1, 1, 0).
    fn default() -> Self {
        Self {
            reference_params: MiddletonParams::two_state(0.3, 10.0, 0.9).expect("valid constants"),
            init: InitialGuess::Middleton(MiddletonParams::two_state(0.1, 1.0, 0.0).expect("valid constants")),
            frame_length: DEFAULT_FRAME_LENGTH,
            num_trials: DEFAULT_TRIALS,
            base_seed: 0,
            em_config: EmConfig::default(),
            sweep: None,
            variants: vec![EmVariant::Standard, EmVariant::Constrained],
            record_trials: false,
        }
    }
}

impl ExperimentConfig {
    /// Robustness setup: reference (A, Λ, r) = (0.4, 10, 0.45) and an
    /// initial guess equal to the reference until a sweep overrides it.
    pub fn robustness() -> Self {
        let reference = MiddletonParams::two_state(0.4, 10.0, 0.45).expect("valid constants");
        Self {
            reference_params: reference,
            init: InitialGuess::Middleton(reference),
            ..Self::default()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.frame_length == 0 {
            return bad("frame_length must be at least 1".into());
        }
        if self.num_trials == 0 {
            return bad("num_trials must be at least 1".into());
        }
        if self.variants.is_empty() {
            return bad("at least one EM variant is required".into());
        }
        self.em_config.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let expected_states = 2 * self.reference_params.num_noise_states();
        match &self.init {
            InitialGuess::Middleton(p) => {
                if p.num_noise_states() != self.reference_params.num_noise_states() {
                    return bad("initial guess and reference differ in the number of noise states".into());
                }
            }
            InitialGuess::Explicit(theta) => {
                theta.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                if theta.num_states() != expected_states {
                    return bad(format!(
                        "explicit initial guess has {} states, reference implies {expected_states}",
                        theta.num_states()
                    ));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            let InitialGuess::Middleton(base) = &self.init else {
                return bad("a sweep needs a Markov-Middleton initial guess".into());
            };
            if sweep.values.is_empty() {
                return bad(format!("sweep over {} has no values", sweep.param));
            }
            for &v in &sweep.values {
                sweep
                    .param
                    .apply(*base, v)
                    .map_err(|e| HarnessError::Config(format!("sweep value {v}: {e}")))?;
            }
        }
        Ok(())
    }

    /// The configuration with the initial guess's swept parameter set to
    /// `value` and the sweep removed.
    pub fn at_sweep_point(&self, param: SweepParam, value: f64) -> Result<Self, HarnessError> {
        let InitialGuess::Middleton(base) = &self.init else {
            return Err(HarnessError::Config("a sweep needs a Markov-Middleton initial guess".into()));
        };
        let mut cfg = self.clone();
        cfg.init = InitialGuess::Middleton(param.apply(*base, value)?);
        cfg.sweep = None;
        Ok(cfg)
    }
}
