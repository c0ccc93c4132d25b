use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sbpd::cli::config::OUTPUT_DIR_ENV;
use sbpd::cli::experiment::{obtain_reference, Instance, SolverConstants, REFERENCE_FILE};
use sbpd::cli::{
    run_check_suite, run_experiment, BatchSize, CheckLevel, ExperimentConfig, ExperimentKind,
};
use sbpd::oracle::OracleMode;
use sbpd::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sbpd",
    version,
    about = "Stochastic Bregman primal-dual splitting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in experiment, optionally starting from a config file.
    Experiment {
        kind: ExperimentKind,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the experiment described by a config file.
    Solve {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compute (or load) only the reference solution.
    Reference {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the property check suite.
    Check {
        /// Use the full sample counts.
        #[arg(long)]
        full: bool,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

/// Config keys settable from the command line; flags win over the file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    reference_iterations: Option<u64>,
    #[arg(long, alias = "batch", value_parser = parse_batch)]
    batch_size: Option<BatchSize>,
    #[arg(long, alias = "oracle", value_parser = parse_mode)]
    oracle_mode: Option<OracleMode>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    kernel_radius: Option<usize>,
    #[arg(long)]
    step_safety: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    cert_every: Option<u64>,
    #[arg(long)]
    early_stop_tol: Option<f64>,
    #[arg(long)]
    record_wall_time: bool,
    #[arg(long)]
    data_file: Option<PathBuf>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
}

fn parse_batch(s: &str) -> std::result::Result<BatchSize, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<OracleMode, String> {
    serde_json::from_value(json!(s)).map_err(|_| {
        format!("unknown oracle mode {s:?} (expected exact, paper-partial or scaled-unbiased)")
    })
}

impl Overrides {
    fn apply(self, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None if kind.is_none() => {
                return Err(Error::Config(
                    "--config is required for this command".into(),
                ))
            }
            None => ExperimentConfig::default(),
        };
        if let Some(k) = kind {
            cfg.experiment = k;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v; }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() { cfg.$field = self.$field; }
            )*};
        }
        set!(
            seed,
            iterations,
            batch_size,
            oracle_mode,
            gamma,
            noise_level,
            kernel_radius
        );
        set!(step_safety, repeats, cert_every, output_dir);
        set_opt!(n, m, reference_iterations, beta, early_stop_tol, data_file);
        cfg.record_wall_time |= self.record_wall_time;
        Ok(cfg)
    }
}

fn experiment(cfg: ExperimentConfig) -> Result<serde_json::Value> {
    let resolved = cfg.resolve()?;
    let report = run_experiment(&resolved)?;
    let meta = &report.meta;
    let finals = |f: fn(&sbpd::cli::RunSummary) -> f64| {
        meta.runs.iter().map(f).sum::<f64>() / meta.runs.len() as f64
    };
    Ok(json!({
        "output_dir": resolved.output_dir,
        "experiment": resolved.experiment.as_str(),
        "deterministic": meta.deterministic,
        "runs": meta.runs.len(),
        "reference_cached": meta.reference.loaded_from_cache,
        "rate_constant": meta.rate_constant,
        "mean_final_gap_ergodic": finals(|r| r.final_gap_ergodic),
        "mean_final_residual": finals(|r| r.final_residual),
        "certificate_failures": meta.runs.iter().map(|r| r.certificate_failures).sum::<u64>(),
    }))
}

fn reference(cfg: ExperimentConfig) -> Result<serde_json::Value> {
    let resolved = cfg.resolve()?;
    let instance = Instance::build(&resolved)?;
    let constants = SolverConstants::compute(instance.problem(), resolved.step_safety)?;
    let (reference, cached) = obtain_reference(&resolved, &instance, &constants)?;
    Ok(json!({
        "path": resolved.output_dir.join(REFERENCE_FILE),
        "config_hash": reference.config_hash,
        "iterations": reference.iterations,
        "ref_tol": reference.ref_tol,
        "cached": cached,
    }))
}

fn run(cli: Cli) -> Result<bool> {
    let value = match cli.command {
        Command::Experiment { kind, overrides } => experiment(overrides.apply(Some(kind))?)?,
        Command::Solve { overrides } => experiment(overrides.apply(None)?)?,
        Command::Reference { overrides } => reference(overrides.apply(None)?)?,
        Command::Check { full, json } => {
            let level = if full {
                CheckLevel::Full
            } else {
                CheckLevel::Fast
            };
            let report = run_check_suite(level)?;
            if json {
                emit(&serde_json::to_string_pretty(&report)?)?;
            } else {
                for outcome in &report.outcomes {
                    emit(&outcome.to_string())?;
                }
            }
            return Ok(report.passed());
        }
    };
    emit(&serde_json::to_string_pretty(&value)?)?;
    Ok(true)
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(line: &str) -> Result<()> {
    match writeln!(io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}
