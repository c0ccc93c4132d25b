//! Experiment orchestration: reference solution, measured runs, and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BatchSize, CustomData, ExperimentKind, ResolvedConfig};
use super::trace::{mean_trace, should_log, write_trace, TraceRecord};
use crate::error::{Error, Result};
use crate::linalg::{operator_norm, DenseMatrix, DenseVector, NORM_MAX_ITER, NORM_TOL};
use crate::oracle::{GradientOracle, OracleMode};
use crate::problems::{
    build_ot_inverse, build_simplex_tv, compute_reference, config_hash, load_or_compute,
    write_atomic, OtInverseProblem, ReferenceSolution, SimplexTvProblem,
};
use crate::solver::{
    asymptotic_residual, default_step_sizes, estimate_inequality_slack, lagrangian_gap,
    rate_constant, sbpd_step, EarlyStop, Oracles, SaddleProblem, SolverState, StepSchedule,
};

pub const REFERENCE_FILE: &str = "reference.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const META_FILE: &str = "meta.json";
pub const RUNS_DIR: &str = "runs";

/// A built problem instance.
#[derive(Clone, Debug)]
pub enum Instance {
    SimplexTv(SimplexTvProblem),
    OtInverse(OtInverseProblem),
}

impl Instance {
    pub fn build(cfg: &ResolvedConfig) -> Result<Self> {
        Ok(match cfg.experiment {
            ExperimentKind::SimplexTv => {
                Instance::SimplexTv(build_simplex_tv(cfg.n, cfg.m, cfg.seed, cfg.beta)?)
            }
            ExperimentKind::Custom => {
                let path = cfg
                    .data_file
                    .as_ref()
                    .ok_or_else(|| Error::Config("the custom experiment needs data_file".into()))?;
                let data = CustomData::load(path)?;
                let a = DenseMatrix::from_rows(&data.a)?;
                Instance::SimplexTv(SimplexTvProblem::new(
                    a,
                    DenseVector::new(data.b)?,
                    cfg.beta,
                )?)
            }
            ExperimentKind::OtInverse => Instance::OtInverse(build_ot_inverse(
                cfg.n,
                cfg.seed,
                cfg.gamma,
                cfg.beta,
                cfg.noise_level,
                cfg.kernel_radius,
            )?),
        })
    }

    pub fn problem(&self) -> &dyn SaddleProblem {
        match self {
            Instance::SimplexTv(p) => p,
            Instance::OtInverse(p) => p,
        }
    }
}

/// Constants derived from a problem and echoed into the metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConstants {
    pub lambda: f64,
    pub nu: f64,
    pub primal_smoothness: f64,
    pub dual_smoothness: f64,
    pub opnorm: f64,
    pub opnorm_iterations: usize,
    pub opnorm_converged: bool,
}

impl SolverConstants {
    pub fn compute<P: SaddleProblem + ?Sized>(problem: &P, safety: f64) -> Result<Self> {
        let norm = operator_norm(problem.coupling(), NORM_TOL, NORM_MAX_ITER)?;
        if !norm.converged {
            log::warn!(
                "operator norm estimate did not converge in {} iterations",
                norm.iterations
            );
        }
        let (lambda, nu) = default_step_sizes(
            problem.primal_smoothness(),
            problem.dual_smoothness(),
            norm.value,
            safety,
        )?;
        Ok(SolverConstants {
            lambda,
            nu,
            primal_smoothness: problem.primal_smoothness(),
            dual_smoothness: problem.dual_smoothness(),
            opnorm: norm.value,
            opnorm_iterations: norm.iterations,
            opnorm_converged: norm.converged,
        })
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        StepSchedule::constant(self.lambda, self.nu)
    }
}

/// Inputs that determine the reference solution; hashed for the cache key.
#[derive(Serialize)]
struct ReferenceKey<'a> {
    experiment: &'a str,
    n: usize,
    m: usize,
    seed: u64,
    beta: f64,
    gamma: f64,
    noise_level: f64,
    kernel_radius: usize,
    step_safety: f64,
    reference_iterations: u64,
    data_sha256: Option<String>,
}

pub fn reference_hash(cfg: &ResolvedConfig) -> Result<String> {
    let data_sha256 = match (&cfg.experiment, &cfg.data_file) {
        (ExperimentKind::Custom, Some(p)) => Some(hex::encode(Sha256::digest(fs::read(p)?))),
        _ => None,
    };
    let ot = cfg.experiment == ExperimentKind::OtInverse;
    config_hash(&ReferenceKey {
        experiment: cfg.experiment.as_str(),
        n: cfg.n,
        m: if ot { 0 } else { cfg.m },
        seed: if cfg.experiment == ExperimentKind::Custom {
            0
        } else {
            cfg.seed
        },
        beta: cfg.beta,
        gamma: if ot { cfg.gamma } else { 0.0 },
        noise_level: if ot { cfg.noise_level } else { 0.0 },
        kernel_radius: if ot { cfg.kernel_radius } else { 0 },
        step_safety: cfg.step_safety,
        reference_iterations: cfg.reference_iterations,
        data_sha256,
    })
}

/// Loads the cached reference in `cfg.output_dir` or computes it.
pub fn obtain_reference(
    cfg: &ResolvedConfig,
    instance: &Instance,
    constants: &SolverConstants,
) -> Result<(ReferenceSolution, bool)> {
    fs::create_dir_all(&cfg.output_dir)?;
    let hash = reference_hash(cfg)?;
    let path = cfg.output_dir.join(REFERENCE_FILE);
    let problem = instance.problem();
    load_or_compute(&path, &hash, || {
        log::info!(
            "computing reference with {} iterations",
            cfg.reference_iterations
        );
        compute_reference(
            problem,
            &constants.schedule()?,
            constants.opnorm,
            cfg.reference_iterations,
            hash.clone(),
        )
    })
}

/// Settings of one measured run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub iterations: u64,
    pub cert_every: u64,
    pub early_stop_tol: Option<f64>,
    pub record_wall_time: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub oracle_seed: u64,
    pub iterations: u64,
    pub stopped_early: bool,
    pub final_gap_pointwise: f64,
    pub final_gap_ergodic: f64,
    pub final_residual: f64,
    pub certificate_checks: u64,
    pub certificate_failures: u64,
    /// Smallest `slack / tolerance` seen; below -1 means a failed check.
    pub worst_certificate_ratio: Option<f64>,
}

/// One measured run against a fixed reference.
pub fn run_single<P: SaddleProblem + ?Sized>(
    problem: &P,
    schedule: &StepSchedule,
    oracles: &Oracles,
    reference: &ReferenceSolution,
    opts: &RunOptions,
) -> Result<(Vec<TraceRecord>, RunSummary)> {
    let (x_ref, mu_ref) = (&reference.x_star[..], &reference.mu_star[..]);
    let mut state = SolverState::new(problem.initial_point());
    let mut records = Vec::new();
    let mut stop = opts.early_stop_tol.map(EarlyStop::new);
    let mut checks = 0u64;
    let mut failures = 0u64;
    let mut worst: Option<f64> = None;
    let mut stopped_early = false;
    let started = Instant::now();

    while state.k < opts.iterations {
        sbpd_step(problem, schedule, &mut state, oracles)?;
        let k = state.k;
        let slack = if opts.cert_every > 0 && (k - 1).is_multiple_of(opts.cert_every) {
            let e = estimate_inequality_slack(
                problem,
                schedule,
                k - 1,
                &state.previous,
                &state.current,
                x_ref,
                mu_ref,
            )?;
            checks += 1;
            if !e.holds() {
                failures += 1;
            }
            let ratio = e.slack / e.tolerance();
            worst = Some(worst.map_or(ratio, |w: f64| w.min(ratio)));
            Some(e.slack)
        } else {
            None
        };
        let mut gap_pointwise = None;
        if let Some(s) = stop.as_mut() {
            let g = lagrangian_gap(problem, state.x(), state.mu(), x_ref, mu_ref)?;
            gap_pointwise = Some(g);
            stopped_early = s.observe(g);
        }
        if should_log(k, opts.iterations) || stopped_early {
            let gap_pointwise = match gap_pointwise {
                Some(g) => g,
                None => lagrangian_gap(problem, state.x(), state.mu(), x_ref, mu_ref)?,
            };
            records.push(TraceRecord {
                k,
                gap_pointwise,
                gap_ergodic: lagrangian_gap(problem, &state.x_bar, &state.mu_bar, x_ref, mu_ref)?,
                lagrangian: problem.lagrangian(state.x(), state.mu())?,
                residual: asymptotic_residual(&state.previous, &state.current),
                estimate_slack: slack,
                wall_nanos: opts
                    .record_wall_time
                    .then(|| started.elapsed().as_nanos().min(u64::MAX as u128) as u64),
            });
        }
        if stopped_early {
            break;
        }
    }
    let last = records
        .last()
        .ok_or_else(|| Error::Parameter("run made no iterations".into()))?;
    let summary = RunSummary {
        run_index: 0,
        oracle_seed: oracles.primal.seed(),
        iterations: state.k,
        stopped_early,
        final_gap_pointwise: last.gap_pointwise,
        final_gap_ergodic: last.gap_ergodic,
        final_residual: last.residual,
        certificate_checks: checks,
        certificate_failures: failures,
        worst_certificate_ratio: worst,
    };
    Ok((records, summary))
}

/// Oracle seed of repeat `run_index`.
pub fn run_seed(base: u64, run_index: usize) -> u64 {
    base.wrapping_add(run_index as u64)
}

pub fn oracles_for_run(
    cfg: &ResolvedConfig,
    problem: &dyn SaddleProblem,
    run_index: usize,
) -> Result<Oracles> {
    let seed = run_seed(cfg.seed, run_index);
    let primal = if cfg.is_deterministic() {
        GradientOracle::exact(problem.primal_summands())
    } else {
        let q = match cfg.batch_size {
            BatchSize::Full => problem.primal_summands(),
            BatchSize::Size(q) => q,
        };
        GradientOracle::new(cfg.oracle_mode, q, problem.primal_summands(), seed)?
    };
    Ok(Oracles {
        primal,
        dual: GradientOracle::exact(problem.dual_summands()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub path: PathBuf,
    pub config_hash: String,
    pub iterations: u64,
    pub ref_tol: f64,
    /// Always true: `ref_tol` is an estimate, not a bound.
    pub ref_tol_is_heuristic: bool,
    pub loaded_from_cache: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub config: ResolvedConfig,
    pub constants: SolverConstants,
    pub oracle_mode: OracleMode,
    pub batch_size: BatchSize,
    pub deterministic: bool,
    pub problem_seed: u64,
    pub oracle_seeds: Vec<u64>,
    pub reference: ReferenceInfo,
    /// `(1/Lambda_0) D(w*, w_0) - M(w*, w_0)`.
    pub rate_constant: f64,
    pub trace_files: Vec<PathBuf>,
    pub mean_trace_file: Option<PathBuf>,
    pub runs: Vec<RunSummary>,
    pub modelling_choices: Vec<String>,
}

/// Result of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub meta: ExperimentMeta,
    pub traces: Vec<Vec<TraceRecord>>,
    pub mean_trace: Option<Vec<TraceRecord>>,
    pub reference: ReferenceSolution,
}

fn modelling_choices(cfg: &ResolvedConfig) -> Vec<String> {
    let mut notes = vec![
        "ergodic averages exclude the initial point".to_string(),
        "ref_tol is the final reference residual times (1/lambda + 1/nu + ||T||), a heuristic"
            .to_string(),
    ];
    if cfg.experiment == ExperimentKind::OtInverse {
        notes.push(format!(
            "bump kernel half-width {} grid points, zero-padded, columns renormalized to sum 1",
            cfg.kernel_radius
        ));
        notes.push("ground truth: two disjoint boxes of widths n/10 and n/6, normalized".into());
        notes.push(format!(
            "observation noise: flat Dirichlet draw mixed with weight {}",
            cfg.noise_level
        ));
    }
    notes
}

/// Runs the full protocol and writes `reference.json`, the traces and `meta.json`.
pub fn run_experiment(cfg: &ResolvedConfig) -> Result<ExperimentReport> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| {
        Error::Config(format!(
            "cannot create output directory {}: {e}",
            out.display()
        ))
    })?;
    let instance = Instance::build(cfg)?;
    let problem = instance.problem();
    let constants = SolverConstants::compute(problem, cfg.step_safety)?;
    let schedule = constants.schedule()?;
    let (reference, cached) = obtain_reference(cfg, &instance, &constants)?;
    let start = problem.initial_point();
    let c0 = rate_constant(
        problem,
        &schedule,
        &reference.x_star,
        &reference.mu_star,
        &start,
    )?;

    let opts = RunOptions {
        iterations: cfg.iterations,
        cert_every: cfg.cert_every,
        early_stop_tol: cfg.early_stop_tol,
        record_wall_time: cfg.record_wall_time,
    };
    if cfg.cert_every > 0 && !cfg.is_deterministic() {
        log::warn!("the energy certificate is only guaranteed with exact gradients");
    }
    let runs = cfg.runs();
    let oracles: Vec<Oracles> = (0..runs)
        .map(|r| oracles_for_run(cfg, problem, r))
        .collect::<Result<_>>()?;
    let results: Vec<(Vec<TraceRecord>, RunSummary)> = oracles
        .par_iter()
        .enumerate()
        .map(|(r, o)| {
            let (trace, mut summary) = run_single(problem, &schedule, o, &reference, &opts)?;
            summary.run_index = r;
            Ok((trace, summary))
        })
        .collect::<Result<_>>()?;
    let (traces, summaries): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let mut trace_files = Vec::new();
    let mut mean = None;
    let mut mean_trace_file = None;
    if cfg.is_deterministic() {
        write_trace(&out.join(TRACE_FILE), &traces[0])?;
        trace_files.push(PathBuf::from(TRACE_FILE));
    } else {
        fs::create_dir_all(out.join(RUNS_DIR))?;
        for (r, t) in traces.iter().enumerate() {
            let rel = Path::new(RUNS_DIR).join(format!("run_{r:03}.csv"));
            write_trace(&out.join(&rel), t)?;
            trace_files.push(rel);
        }
        let m = mean_trace(&traces)?;
        write_trace(&out.join(TRACE_FILE), &m)?;
        mean_trace_file = Some(PathBuf::from(TRACE_FILE));
        mean = Some(m);
    }

    let meta = ExperimentMeta {
        config: cfg.clone(),
        constants,
        oracle_mode: if cfg.is_deterministic() {
            OracleMode::Exact
        } else {
            cfg.oracle_mode
        },
        batch_size: cfg.batch_size,
        deterministic: cfg.is_deterministic(),
        problem_seed: cfg.seed,
        oracle_seeds: oracles.iter().map(|o| o.primal.seed()).collect(),
        reference: ReferenceInfo {
            path: PathBuf::from(REFERENCE_FILE),
            config_hash: reference.config_hash.clone(),
            iterations: reference.iterations,
            ref_tol: reference.ref_tol,
            ref_tol_is_heuristic: true,
            loaded_from_cache: cached,
        },
        rate_constant: c0,
        trace_files,
        mean_trace_file,
        runs: summaries,
        modelling_choices: modelling_choices(cfg),
    };
    write_atomic(&out.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(ExperimentReport {
        meta,
        traces,
        mean_trace: mean,
        reference,
    })
}
