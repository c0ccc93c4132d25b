//! Concrete saddle problems and reference solutions.

mod euclidean_box;
mod ot_inverse;
mod reference;
mod simplex_tv;

pub use euclidean_box::EuclideanBoxProblem;
pub use ot_inverse::{
    build_ot_inverse, lse, ot_semidual_value_grad, quadratic_cost, softmax, two_box_ground_truth,
    OtInverseProblem, DEFAULT_KERNEL_RADIUS,
};
pub use reference::{
    compute_reference, config_hash, load_or_compute, write_atomic, ReferenceSolution,
    MIN_REFERENCE_BUDGET,
};
pub use simplex_tv::{
    build_simplex_tv, kl_fidelity_grad, kl_rel_smooth_constant, SimplexTvProblem,
};

use crate::bregman::SIMPLEX_INPUT_TOL;
use crate::error::{Error, Result};

/// Relative slack allowed on ball constraints, absorbing rounding in averages.
const BALL_TOL: f64 = 1e-12;

pub(crate) fn check_simplex(x: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain(format!("simplex entry {i} is {}", x[i])));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_INPUT_TOL {
        return Err(Error::Domain(format!("simplex vector sums to {s}")));
    }
    Ok(())
}

pub(crate) fn check_ball(v: &[f64], radius: f64) -> Result<()> {
    let limit = radius + BALL_TOL * radius.max(1.0);
    match v.iter().position(|e| e.is_nan() || e.abs() > limit) {
        Some(i) => Err(Error::Domain(format!(
            "entry {i} = {} lies outside the ball of radius {radius}",
            v[i]
        ))),
        None => Ok(()),
    }
}
