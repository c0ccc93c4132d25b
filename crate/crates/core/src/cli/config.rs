//! Experiment configuration: a single JSON document whose keys can each be
//! overridden from the command line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::OracleMode;
use crate::problems::DEFAULT_KERNEL_RADIUS;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "SBPD_OUTPUT_DIR";

/// Default TV weight for the simplex experiment.
pub const SIMPLEX_TV_DEFAULT_BETA: f64 = 0.1;
/// Default TV weight for the transport experiment.
pub const OT_DEFAULT_BETA: f64 = 1.0;
/// Reference budget as a multiple of the measured budget when unset.
pub const REFERENCE_BUDGET_FACTOR: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SimplexTv,
    OtInverse,
    /// Simplex-TV with `A` and `b` read from `data_file`.
    Custom,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SimplexTv => "simplex-tv",
            ExperimentKind::OtInverse => "ot-inverse",
            ExperimentKind::Custom => "custom",
        }
    }
}

/// Either every summand or a fixed number of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Full => f.write_str("full"),
            BatchSize::Size(q) => write!(f, "{q}"),
        }
    }
}

impl FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(BatchSize::Full);
        }
        s.parse::<usize>().map(BatchSize::Size).map_err(|_| {
            Error::Config(format!(
                "batch size must be \"full\" or an integer, got {s:?}"
            ))
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BatchRepr {
    Size(usize),
    Word(String),
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            BatchSize::Full => BatchRepr::Word("full".into()).serialize(s),
            BatchSize::Size(q) => BatchRepr::Size(q).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match BatchRepr::deserialize(d)? {
            BatchRepr::Size(q) => Ok(BatchSize::Size(q)),
            BatchRepr::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Number of unknowns (grid size for the transport experiment).
    pub n: Option<usize>,
    /// Number of measurements (simplex experiments only).
    pub m: Option<usize>,
    pub seed: u64,
    /// Measured-phase budget per run.
    pub iterations: u64,
    /// Reference budget; defaults to `REFERENCE_BUDGET_FACTOR * iterations`.
    pub reference_iterations: Option<u64>,
    pub batch_size: BatchSize,
    pub oracle_mode: OracleMode,
    pub gamma: f64,
    pub beta: Option<f64>,
    pub noise_level: f64,
    pub kernel_radius: usize,
    pub step_safety: f64,
    pub repeats: usize,
    /// Certificate period in steps; 0 disables it.
    pub cert_every: u64,
    pub early_stop_tol: Option<f64>,
    /// Fill the `wall_nanos` column. Off by default so traces are reproducible byte for byte.
    pub record_wall_time: bool,
    pub data_file: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::SimplexTv,
            n: None,
            m: None,
            seed: 0,
            iterations: 20_000,
            reference_iterations: None,
            batch_size: BatchSize::Full,
            oracle_mode: OracleMode::PaperPartial,
            gamma: 1.0,
            beta: None,
            noise_level: 0.1,
            kernel_radius: DEFAULT_KERNEL_RADIUS,
            step_safety: 1.0,
            repeats: 20,
            cert_every: 0,
            early_stop_tol: None,
            record_wall_time: false,
            data_file: None,
            output_dir: PathBuf::from("sbpd-output"),
        }
    }
}

/// Configuration with every default filled in and every field validated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub iterations: u64,
    pub reference_iterations: u64,
    pub batch_size: BatchSize,
    pub oracle_mode: OracleMode,
    pub gamma: f64,
    pub beta: f64,
    pub noise_level: f64,
    pub kernel_radius: usize,
    pub step_safety: f64,
    pub repeats: usize,
    pub cert_every: u64,
    pub early_stop_tol: Option<f64>,
    pub record_wall_time: bool,
    pub data_file: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl ResolvedConfig {
    /// True when every gradient is exact, so a single run is made.
    pub fn is_deterministic(&self) -> bool {
        self.oracle_mode == OracleMode::Exact
            || match self.batch_size {
                BatchSize::Full => true,
                BatchSize::Size(q) => q == self.m,
            }
    }

    pub fn runs(&self) -> usize {
        if self.is_deterministic() {
            1
        } else {
            self.repeats
        }
    }
}

/// Problem data for the `custom` experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomData {
    /// Rows of `A`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl CustomData {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read data file {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let cfg = |msg: String| Err(Error::Config(msg));
        let (n, m) = match self.experiment {
            ExperimentKind::SimplexTv => (self.n.unwrap_or(250), self.m.unwrap_or(250)),
            ExperimentKind::OtInverse => {
                let n = self.n.unwrap_or(108);
                (n, self.m.unwrap_or(1))
            }
            ExperimentKind::Custom => {
                let path = match &self.data_file {
                    Some(p) => p,
                    None => return cfg("the custom experiment needs data_file".into()),
                };
                let data = CustomData::load(path)?;
                let rows = data.a.len();
                let cols = data.a.first().map_or(0, Vec::len);
                if self.n.is_some_and(|n| n != cols) || self.m.is_some_and(|m| m != rows) {
                    return cfg(format!(
                        "n/m disagree with the {rows}x{cols} data in {}",
                        path.display()
                    ));
                }
                (cols, rows)
            }
        };
        let beta = self.beta.unwrap_or(match self.experiment {
            ExperimentKind::OtInverse => OT_DEFAULT_BETA,
            _ => SIMPLEX_TV_DEFAULT_BETA,
        });
        let min_n = if self.experiment == ExperimentKind::OtInverse {
            4
        } else {
            2
        };
        if n < min_n {
            return cfg(format!("n must be at least {min_n}, got {n}"));
        }
        if self.experiment != ExperimentKind::OtInverse && m < 2 {
            return cfg(format!("m must be at least 2, got {m}"));
        }
        if self.iterations == 0 {
            return cfg("iterations must be positive".into());
        }
        let reference_iterations = self
            .reference_iterations
            .unwrap_or(self.iterations.saturating_mul(REFERENCE_BUDGET_FACTOR));
        if reference_iterations < crate::problems::MIN_REFERENCE_BUDGET {
            return cfg(format!(
                "reference_iterations must be at least {}, got {reference_iterations}",
                crate::problems::MIN_REFERENCE_BUDGET
            ));
        }
        if let BatchSize::Size(q) = self.batch_size {
            if self.experiment == ExperimentKind::OtInverse {
                if self.oracle_mode != OracleMode::Exact {
                    return cfg("the transport experiment has no finite-sum term to sample; use batch_size \"full\"".into());
                }
            } else if q == 0 || q > m {
                return cfg(format!("batch_size must lie in [1, {m}], got {q}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return cfg(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return cfg(format!("beta must be nonnegative, got {beta}"));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return cfg(format!(
                "noise_level must lie in [0, 1], got {}",
                self.noise_level
            ));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return cfg(format!(
                "step_safety must lie in (0, 1], got {}",
                self.step_safety
            ));
        }
        if self.repeats == 0 {
            return cfg("repeats must be positive".into());
        }
        if let Some(t) = self.early_stop_tol {
            if !(t > 0.0 && t.is_finite()) {
                return cfg(format!("early_stop_tol must be positive, got {t}"));
            }
        }
        Ok(ResolvedConfig {
            experiment: self.experiment,
            n,
            m,
            seed: self.seed,
            iterations: self.iterations,
            reference_iterations,
            batch_size: self.batch_size,
            oracle_mode: self.oracle_mode,
            gamma: self.gamma,
            beta,
            noise_level: self.noise_level,
            kernel_radius: self.kernel_radius,
            step_safety: self.step_safety,
            repeats: self.repeats,
            cert_every: self.cert_every,
            early_stop_tol: self.early_stop_tol,
            record_wall_time: self.record_wall_time,
            data_file: self.data_file.clone(),
            output_dir: self.output_dir.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_size_parses_both_forms() {
        assert_eq!("full".parse::<BatchSize>().unwrap(), BatchSize::Full);
        assert_eq!("25".parse::<BatchSize>().unwrap(), BatchSize::Size(25));
        assert!("half".parse::<BatchSize>().is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"batch_size": 5}"#).unwrap();
        assert_eq!(c.batch_size, BatchSize::Size(5));
        let c: ExperimentConfig = serde_json::from_str(r#"{"batch_size": "full"}"#).unwrap();
        assert_eq!(c.batch_size, BatchSize::Full);
    }

    #[test]
    fn config_json_roundtrip() {
        let c = ExperimentConfig {
            n: Some(50),
            batch_size: BatchSize::Size(7),
            oracle_mode: OracleMode::ScaledUnbiased,
            ..Default::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"iters": 5}"#).is_err());
    }

    #[test]
    fn defaults_resolve_per_experiment() {
        let r = ExperimentConfig::default().resolve().unwrap();
        assert_eq!((r.n, r.m, r.beta), (250, 250, SIMPLEX_TV_DEFAULT_BETA));
        assert_eq!(r.reference_iterations, 200_000);
        assert!(r.is_deterministic());
        let ot = ExperimentConfig {
            experiment: ExperimentKind::OtInverse,
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!((ot.n, ot.beta, ot.gamma), (108, 1.0, 1.0));
    }

    #[test]
    fn invalid_fields_are_config_errors() {
        let bad = [
            ExperimentConfig {
                iterations: 0,
                ..Default::default()
            },
            ExperimentConfig {
                n: Some(1),
                ..Default::default()
            },
            ExperimentConfig {
                gamma: 0.0,
                ..Default::default()
            },
            ExperimentConfig {
                beta: Some(-1.0),
                ..Default::default()
            },
            ExperimentConfig {
                noise_level: 2.0,
                ..Default::default()
            },
            ExperimentConfig {
                step_safety: 1.5,
                ..Default::default()
            },
            ExperimentConfig {
                repeats: 0,
                ..Default::default()
            },
            ExperimentConfig {
                batch_size: BatchSize::Size(300),
                ..Default::default()
            },
            ExperimentConfig {
                iterations: 10,
                reference_iterations: Some(500),
                ..Default::default()
            },
            ExperimentConfig {
                experiment: ExperimentKind::Custom,
                ..Default::default()
            },
            ExperimentConfig {
                experiment: ExperimentKind::OtInverse,
                batch_size: BatchSize::Size(3),
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.resolve(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn stochastic_runs_use_repeats() {
        let r = ExperimentConfig {
            n: Some(50),
            m: Some(50),
            batch_size: BatchSize::Size(25),
            repeats: 4,
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert!(!r.is_deterministic());
        assert_eq!(r.runs(), 4);
    }
}
