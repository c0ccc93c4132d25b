//! Approximate saddle points from long deterministic runs, cached on disk.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::solver::{asymptotic_residual, solve, Oracles, SaddleProblem, StepSchedule};

/// Smallest accepted reference budget.
pub const MIN_REFERENCE_BUDGET: u64 = 1_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub config_hash: String,
    pub iterations: u64,
    /// Final step residual scaled by `1/lambda + 1/nu + ||T||`. A heuristic
    /// accuracy estimate, not a proven bound.
    pub ref_tol: f64,
    pub x_star: Vec<f64>,
    pub mu_star: Vec<f64>,
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Runs the exact-gradient solver for `budget` steps and keeps the last iterate.
pub fn compute_reference<P: SaddleProblem + ?Sized>(
    problem: &P,
    schedule: &StepSchedule,
    opnorm: f64,
    budget: u64,
    config_hash: String,
) -> Result<ReferenceSolution> {
    if budget < MIN_REFERENCE_BUDGET {
        return Err(Error::Parameter(format!(
            "reference budget must be at least {MIN_REFERENCE_BUDGET}, got {budget}"
        )));
    }
    let state = solve(problem, schedule, &Oracles::exact(problem), budget)?;
    let (lambda, nu) = schedule.limits();
    let residual = asymptotic_residual(&state.previous, &state.current);
    let ref_tol = residual * (1.0 / lambda + 1.0 / nu + opnorm);
    if !ref_tol.is_finite() {
        return Err(Error::Domain(
            "reference run produced a non-finite residual".into(),
        ));
    }
    Ok(ReferenceSolution {
        config_hash,
        iterations: budget,
        ref_tol,
        x_star: state.x().to_vec(),
        mu_star: state.mu().to_vec(),
    })
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads the reference stored at `path` when its hash matches, otherwise
/// computes and stores a fresh one. The flag is true on a cache hit.
pub fn load_or_compute<F>(path: &Path, hash: &str, compute: F) -> Result<(ReferenceSolution, bool)>
where
    F: FnOnce() -> Result<ReferenceSolution>,
{
    if let Ok(bytes) = fs::read(path) {
        match serde_json::from_slice::<ReferenceSolution>(&bytes) {
            Ok(r) if r.config_hash == hash => return Ok((r, true)),
            Ok(_) => log::info!("reference at {} is stale, recomputing", path.display()),
            Err(e) => log::warn!("ignoring unreadable reference {}: {e}", path.display()),
        }
    }
    let fresh = compute()?;
    write_atomic(path, &serde_json::to_vec_pretty(&fresh)?)?;
    Ok((fresh, false))
}
