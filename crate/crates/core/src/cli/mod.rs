//! Experiment configuration, runs, traces and the property check suite
//! behind the `sbpd` binary.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod trace;

pub use checks::{run_check_suite, CheckLevel, CheckOutcome, CheckReport, Status};
pub use config::{BatchSize, ExperimentConfig, ExperimentKind, ResolvedConfig};
pub use experiment::{run_experiment, ExperimentMeta, ExperimentReport, RunSummary};
pub use trace::{read_trace, TraceRecord, TRACE_HEADER};
