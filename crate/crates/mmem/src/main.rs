use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmem::config::{ExperimentConfig, InitialGuess, Sweep, SweepParam, FULL_SCALE_TRIALS};
use mmem::experiment::{initial_params, reference_params, run_experiment, run_trial};
use mmem::output::{
    convergence_rows, robustness_rows, write_csv, write_derive_csv, write_json, write_table_csv, DeriveReport,
    OutputFormat, TableColumn,
};
use mmem::HarnessError;
use mmem_core::{EmVariant, MiddletonParams, ThresholdScale};

#[derive(Parser)]
#[command(name = "mmem", version, about = "Blind EM channel estimation over Markov-Middleton impulsive noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration NMSE/KL statistics across Monte Carlo trials.
    Convergence(RunArgs),
    /// Final error and iterations-to-convergence while sweeping the initial A, lambda or r.
    Robustness(RunArgs),
    /// Estimates of a single trial next to the reference and the initial guess.
    Table(TableArgs),
    /// Closed-form noise statistics and joint HMM parameters of a channel.
    Derive(DeriveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Constrained,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Total,
    PerSample,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    ref_a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    ref_lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    ref_r: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    init_a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    init_lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    init_r: Option<f64>,
    /// Frame length in bits.
    #[arg(long)]
    frames: Option<usize>,
    /// Number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Use 10000 trials.
    #[arg(long, conflicts_with = "trials")]
    full_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Convergence threshold on the log-evidence gain.
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Whether the threshold applies to the total or the per-sample log-evidence.
    #[arg(long, value_enum)]
    tau_scale: Option<ScaleArg>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Re-estimate the Gaussian means as well.
    #[arg(long)]
    estimate_means: bool,
    /// `param=v1,v2,...` with param one of A, lambda, r; repeatable.
    #[arg(long)]
    sweep: Vec<String>,
    /// Include per-trial summaries (JSON output).
    #[arg(long)]
    record_trials: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Which trial's frame to estimate from.
    #[arg(long, default_value_t = 0)]
    trial_index: u64,
}

#[derive(Args)]
struct DeriveArgs {
    #[arg(long, allow_negative_numbers = true)]
    a: f64,
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, allow_negative_numbers = true)]
    r: f64,
    #[arg(long, default_value_t = 2)]
    w: usize,
    /// Background noise variance.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    sigma2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

fn override_params(
    base: MiddletonParams,
    a: Option<f64>,
    lambda: Option<f64>,
    r: Option<f64>,
) -> Result<MiddletonParams, HarnessError> {
    let mut p = base;
    if let Some(v) = a {
        p = p.with_impulsive_index(v).map_err(config_error)?;
    }
    if let Some(v) = lambda {
        p = p.with_power_ratio(v).map_err(config_error)?;
    }
    if let Some(v) = r {
        p = p.with_correlation(v).map_err(config_error)?;
    }
    Ok(p)
}

impl RunArgs {
    fn has_init_flags(&self) -> bool {
        self.init_a.is_some() || self.init_lambda.is_some() || self.init_r.is_some()
    }

    /// Applies the flags on top of `--config` or `default`. With
    /// `init_follows_reference`, an unconfigured initial guess equals the
    /// (possibly overridden) reference.
    fn build(&self, default: ExperimentConfig, init_follows_reference: bool) -> Result<ExperimentConfig, HarnessError> {
        let from_file = self.config.is_some();
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => default,
        };
        cfg.reference_params = override_params(cfg.reference_params, self.ref_a, self.ref_lambda, self.ref_r)?;
        if init_follows_reference && !from_file {
            cfg.init = InitialGuess::Middleton(cfg.reference_params);
        }
        if self.has_init_flags() {
            let InitialGuess::Middleton(base) = cfg.init else {
                return Err(HarnessError::Config("--init-* flags need a Markov-Middleton initial guess".into()));
            };
            cfg.init = InitialGuess::Middleton(
                override_params(base, self.init_a, self.init_lambda, self.init_r)?,
            );
        }
        if let Some(v) = self.frames {
            cfg.frame_length = v;
        }
        if let Some(v) = self.trials {
            cfg.num_trials = v;
        }
        if self.full_scale {
            cfg.num_trials = FULL_SCALE_TRIALS;
        }
        if let Some(v) = self.seed {
            cfg.base_seed = v;
        }
        match self.variant {
            Some(VariantArg::Standard) => cfg.variants = vec![EmVariant::Standard],
            Some(VariantArg::Constrained) => cfg.variants = vec![EmVariant::Constrained],
            Some(VariantArg::Both) => cfg.variants = vec![EmVariant::Standard, EmVariant::Constrained],
            None => {}
        }
        if let Some(v) = self.tau {
            cfg.em_config.convergence_threshold = v;
        }
        match self.tau_scale {
            Some(ScaleArg::Total) => cfg.em_config.threshold_scale = ThresholdScale::Total,
            Some(ScaleArg::PerSample) => cfg.em_config.threshold_scale = ThresholdScale::PerSample,
            None => {}
        }
        if let Some(v) = self.max_iters {
            cfg.em_config.max_iterations = v;
        }
        if self.estimate_means {
            cfg.em_config.estimate_means = true;
        }
        if self.record_trials {
            cfg.record_trials = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn sweeps(&self) -> Result<Vec<Sweep>, HarnessError> {
        self.sweep.iter().map(|s| s.parse()).collect()
    }
}

fn config_error(e: mmem_core::Error) -> HarnessError {
    HarnessError::Config(e.to_string())
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn report_failures(result: &mmem::ExperimentResult) {
    for point in &result.points {
        for v in point.variants.iter().filter(|v| v.trials_failed > 0) {
            let at = match (point.swept_param, point.swept_value) {
                (Some(p), Some(x)) => format!(" ({p} = {x})"),
                _ => String::new(),
            };
            eprintln!(
                "mmem: warning: {} of {} {} trials failed{at} and were excluded",
                v.trials_failed,
                v.trials_failed + v.trials_ok,
                v.variant
            );
        }
    }
}

fn convergence(args: &RunArgs) -> Result<(), HarnessError> {
    let mut cfg = args.build(ExperimentConfig::default(), false)?;
    if !args.sweep.is_empty() || cfg.sweep.is_some() {
        return Err(HarnessError::Config("convergence runs take no sweep; use `robustness`".into()));
    }
    cfg.sweep = None;
    let result = run_experiment(&cfg)?;
    report_failures(&result);
    let mut out = open_output(&args.out)?;
    match args.format {
        OutputFormat::Csv => write_csv(&mut out, &convergence_rows(&result))?,
        OutputFormat::Json => write_json(&mut out, &result)?,
    }
    out.flush()?;
    Ok(())
}

fn robustness(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = args.build(ExperimentConfig::robustness(), true)?;
    let mut sweeps = args.sweeps()?;
    if sweeps.is_empty() {
        sweeps = match &cfg.sweep {
            Some(s) => vec![s.clone()],
            None => SweepParam::ALL
                .iter()
                .map(|&param| Sweep { param, values: param.default_values() })
                .collect(),
        };
    }
    let mut results = Vec::with_capacity(sweeps.len());
    for sweep in sweeps {
        let mut point_cfg = cfg.clone();
        point_cfg.sweep = Some(sweep);
        let result = run_experiment(&point_cfg)?;
        report_failures(&result);
        results.push(result);
    }
    let mut out = open_output(&args.out)?;
    match args.format {
        OutputFormat::Csv => {
            let rows: Vec<_> = results.iter().flat_map(robustness_rows).collect();
            write_csv(&mut out, &rows)?;
        }
        OutputFormat::Json => write_json(&mut out, &results)?,
    }
    out.flush()?;
    Ok(())
}

fn table(args: &TableArgs) -> Result<(), HarnessError> {
    let cfg = args.run.build(ExperimentConfig::default(), false)?;
    let record = run_trial(&cfg, args.trial_index)?;
    let mut columns = vec![
        TableColumn { label: "reference".into(), iterations: None, params: reference_params(&cfg)? },
        TableColumn { label: "initialization".into(), iterations: None, params: initial_params(&cfg)? },
    ];
    for run in &record.runs {
        if let Some(e) = &run.error {
            eprintln!("mmem: warning: {} run failed: {e}", run.variant);
        }
        if let Some(params) = &run.final_params {
            columns.push(TableColumn {
                label: run.variant.to_string(),
                iterations: Some(run.updates),
                params: params.clone(),
            });
        }
    }
    if record.runs.iter().all(|r| r.failed()) {
        return Err(HarnessError::AllTrialsFailed { what: "the table run".into(), trials: 1 });
    }
    let mut out = open_output(&args.run.out)?;
    match args.run.format {
        OutputFormat::Csv => write_table_csv(&mut out, &columns)?,
        OutputFormat::Json => write_json(&mut out, &columns)?,
    }
    out.flush()?;
    Ok(())
}

fn derive(args: &DeriveArgs) -> Result<(), HarnessError> {
    let channel = MiddletonParams::new(args.a, args.lambda, args.r, args.w, args.sigma2).map_err(config_error)?;
    let report = DeriveReport::new(channel)?;
    let mut out = open_output(&args.out)?;
    match args.format {
        OutputFormat::Csv => write_derive_csv(&mut out, &report)?,
        OutputFormat::Json => write_json(&mut out, &report)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors share exit code 1 with other configuration errors; 2 is reserved.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Convergence(args) => convergence(args),
        Command::Robustness(args) => robustness(args),
        Command::Table(args) => table(args),
        Command::Derive(args) => derive(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmem: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
