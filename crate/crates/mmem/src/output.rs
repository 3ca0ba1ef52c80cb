//! CSV and JSON renderings of experiment results.

use std::io::Write;

use mmem_core::{
    noise_transition_matrix, state_probabilities, state_variances, EmVariant, HmmParams,
    MiddletonParams,
};
use serde::Serialize;

use crate::error::HarnessError;
use crate::experiment::ExperimentResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub variant: EmVariant,
    pub iteration: usize,
    pub nmse_mean: f64,
    pub nmse_p25: f64,
    pub nmse_p75: f64,
    pub kl_mean: f64,
    pub kl_p25: f64,
    pub kl_p75: f64,
    pub trials_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub variant: EmVariant,
    pub swept_param: String,
    pub swept_value: f64,
    pub final_nmse_mean: f64,
    pub final_kl_mean: f64,
    pub iters_mean: f64,
    pub iters_p25: f64,
    pub iters_p75: f64,
}

/// One row per variant and iteration, for every sweep point in order.
pub fn convergence_rows(result: &ExperimentResult) -> Vec<ConvergenceRow> {
    result
        .points
        .iter()
        .flat_map(|p| &p.variants)
        .flat_map(|v| {
            v.curve.iter().map(move |c| ConvergenceRow {
                variant: v.variant,
                iteration: c.iteration,
                nmse_mean: c.nmse.mean,
                nmse_p25: c.nmse.p25,
                nmse_p75: c.nmse.p75,
                kl_mean: c.kl.mean,
                kl_p25: c.kl.p25,
                kl_p75: c.kl.p75,
                trials_converged: c.trials_converged,
            })
        })
        .collect()
}

/// One row per variant and sweep point. Points without a sweep are skipped.
pub fn robustness_rows(result: &ExperimentResult) -> Vec<RobustnessRow> {
    let mut rows = Vec::new();
    for variant in &result.config.variants {
        for point in &result.points {
            let (Some(param), Some(value)) = (point.swept_param, point.swept_value) else {
                continue;
            };
            if let Some(v) = point.variant(*variant) {
                rows.push(RobustnessRow {
                    variant: *variant,
                    swept_param: param.name().to_string(),
                    swept_value: value,
                    final_nmse_mean: v.final_nmse.mean,
                    final_kl_mean: v.final_kl.mean,
                    iters_mean: v.iterations.mean,
                    iters_p25: v.iterations.p25,
                    iters_p75: v.iterations.p75,
                });
            }
        }
    }
    rows
}

pub fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// A parameter set shown as one column of the single-run table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableColumn {
    pub label: String,
    pub iterations: Option<usize>,
    pub params: HmmParams,
}

pub fn write_table_csv<W: Write>(out: W, columns: &[TableColumn]) -> Result<(), HarnessError> {
    let s = columns.first().map_or(0, |c| c.params.num_states());
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["column".to_string(), "iterations".to_string()];
    header.extend((0..s).map(|j| format!("variance_{j}")));
    header.extend((0..s).flat_map(|i| (0..s).map(move |j| format!("transition_{i}_{j}"))));
    writer.write_record(&header)?;
    for col in columns {
        let mut record = vec![col.label.clone(), col.iterations.map(|n| n.to_string()).unwrap_or_default()];
        record.extend(col.params.variances.iter().map(|v| format!("{v:?}")));
        record.extend(col.params.transitions.as_slice().iter().map(|v| format!("{v:?}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Closed-form quantities derived from physical channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeriveReport {
    pub channel: MiddletonParams,
    pub state_probabilities: Vec<f64>,
    pub noise_variances: Vec<f64>,
    pub noise_transitions: Vec<Vec<f64>>,
    pub hmm: HmmParams,
}

impl DeriveReport {
    pub fn new(channel: MiddletonParams) -> Result<Self, HarnessError> {
        Ok(Self {
            state_probabilities: state_probabilities(&channel),
            noise_variances: state_variances(&channel),
            noise_transitions: noise_transition_matrix(&channel).to_rows(),
            hmm: mmem_core::build_reference_hmm(&channel, 0.5)?,
            channel,
        })
    }
}

#[derive(Serialize)]
struct DeriveRow<'a> {
    quantity: &'a str,
    row: usize,
    col: usize,
    value: f64,
}

/// Long format: `quantity,row,col,value`; vectors use `col = 0`.
pub fn write_derive_csv<W: Write>(out: W, report: &DeriveReport) -> Result<(), HarnessError> {
    let mut rows = Vec::new();
    let mut vector = |name: &'static str, values: &[f64]| {
        rows.extend(values.iter().enumerate().map(|(i, &value)| DeriveRow { quantity: name, row: i, col: 0, value }));
    };
    vector("state_probability", &report.state_probabilities);
    vector("noise_variance", &report.noise_variances);
    vector("mean", &report.hmm.means);
    vector("variance", &report.hmm.variances);
    vector("initial_probability", &report.hmm.initial_dist);
    for (i, row) in report.noise_transitions.iter().enumerate() {
        rows.extend(row.iter().enumerate().map(|(j, &value)| DeriveRow { quantity: "noise_transition", row: i, col: j, value }));
    }
    for (i, row) in report.hmm.transitions.iter_rows().enumerate() {
        rows.extend(row.iter().enumerate().map(|(j, &value)| DeriveRow { quantity: "transition", row: i, col: j, value }));
    }
    write_csv(out, &rows)
}
