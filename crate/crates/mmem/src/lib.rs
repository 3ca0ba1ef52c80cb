//! Monte Carlo experiments for blind estimation over Markov-Middleton
//! channels, plus the file formats used by the `mmem` command line tool.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod stats;

pub use config::{ExperimentConfig, InitialGuess, Sweep, SweepParam};
pub use error::HarnessError;
pub use experiment::{
    run_experiment, run_trial, ExperimentResult, IterationStats, SweepPointResult, TrialRecord,
    VariantRun, VariantSummary,
};
pub use stats::Summary;
