//! Deconvolution under an entropic Wasserstein fidelity with total variation:
//!
//! ```text
//! min_{rho in simplex}  W_gamma(F rho, theta) + beta ||B rho||_1
//! ```
//!
//! The transport term is replaced by its semidual, giving the saddle problem with
//! `f = 0`, `g` the simplex indicator, `T rho = (F rho, B rho)`, dual variable
//! `mu = (tau, zeta)`, `h*(mu) = sum_j theta_j lse_gamma(tau - C_{., j})` and `l*`
//! the indicator of `|zeta|_inf <= beta`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::bregman::{kl_prox_simplex, log_sum_exp, BregmanPoint, Entropy};
use crate::error::{Error, Result};
use crate::linalg::{Convolution, DenseMatrix, DenseVector, LinearMap};
use crate::solver::{Iterate, SaddleProblem};

use super::{check_ball, check_simplex};

/// Default half-width of the discretized bump kernel, in grid points.
pub const DEFAULT_KERNEL_RADIUS: usize = 10;

/// `gamma log sum exp(tau_i / gamma)`.
pub fn lse(tau: &[f64], gamma: f64) -> f64 {
    let z: Vec<f64> = tau.iter().map(|t| t / gamma).collect();
    gamma * log_sum_exp(&z)
}

/// `exp(tau_i / gamma) / sum_j exp(tau_j / gamma)`, the gradient of [`lse`].
pub fn softmax(tau: &[f64], gamma: f64) -> DenseVector {
    let z: Vec<f64> = tau.iter().map(|t| t / gamma).collect();
    let shift = log_sum_exp(&z);
    DenseVector::from_raw(z.iter().map(|v| (v - shift).exp()).collect())
}

/// Value and gradient of `h*(tau) = sum_j theta_j lse_gamma(tau - C_{., j})`.
pub fn ot_semidual_value_grad(
    tau: &[f64],
    theta: &[f64],
    cost: &DenseMatrix,
    gamma: f64,
) -> Result<(f64, DenseVector)> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if cost.rows() != tau.len() {
        return Err(Error::shape(
            "ot_semidual_value_grad",
            cost.rows(),
            tau.len(),
        ));
    }
    if cost.cols() != theta.len() {
        return Err(Error::shape(
            "ot_semidual_value_grad",
            cost.cols(),
            theta.len(),
        ));
    }
    check_simplex(theta)?;
    let n = tau.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    let mut z = vec![0.0; n];
    for (j, &w) in theta.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = (tau[i] - cost.get(i, j)) / gamma;
        }
        let l = log_sum_exp(&z);
        value += w * gamma * l;
        for (g, zi) in grad.iter_mut().zip(&z) {
            *g += w * (zi - l).exp();
        }
    }
    Ok((value, DenseVector::new(grad)?))
}

/// `C_ij = (i - j)^2 / 2` on an `n`-point grid.
pub fn quadratic_cost(n: usize) -> DenseMatrix {
    let data = (0..n * n)
        .map(|k| {
            let d = (k / n) as f64 - (k % n) as f64;
            0.5 * d * d
        })
        .collect();
    DenseMatrix::new(n, n, data).expect("quadratic cost has consistent shape")
}

/// Two disjoint boxes of widths `n/10` and `n/6`, normalized to unit mass.
pub fn two_box_ground_truth(n: usize) -> DenseVector {
    let w1 = (n / 10).max(1);
    let w2 = (n / 6).max(1);
    let s1 = n / 5;
    let s2 = (3 * n / 5).max(s1 + w1);
    let mut rho = vec![0.0; n];
    for v in rho.iter_mut().skip(s1).take(w1) {
        *v = 1.0;
    }
    for v in rho.iter_mut().skip(s2).take(w2) {
        *v = 1.0;
    }
    let mass: f64 = rho.iter().sum();
    DenseVector::from_raw(rho.into_iter().map(|v| v / mass).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtInverseProblem {
    n: usize,
    cost: DenseMatrix,
    blur: Convolution,
    coupling: LinearMap,
    theta: DenseVector,
    ground_truth: DenseVector,
    gamma: f64,
    beta: f64,
}

impl OtInverseProblem {
    pub fn new(
        blur: Convolution,
        cost: DenseMatrix,
        theta: DenseVector,
        ground_truth: DenseVector,
        gamma: f64,
        beta: f64,
    ) -> Result<Self> {
        let n = theta.len();
        if n < 2 {
            return Err(Error::Construction("grid needs at least two points".into()));
        }
        if cost.rows() != n || cost.cols() != n {
            return Err(Error::shape("OtInverseProblem::new", n, cost.rows()));
        }
        if ground_truth.len() != n {
            return Err(Error::shape("OtInverseProblem::new", n, ground_truth.len()));
        }
        check_simplex(&theta)?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "beta must be nonnegative, got {beta}"
            )));
        }
        let coupling = LinearMap::stack(vec![
            LinearMap::Convolution(blur.clone()),
            LinearMap::forward_difference(n)?,
        ])?;
        Ok(OtInverseProblem {
            n,
            cost,
            blur,
            coupling,
            theta,
            ground_truth,
            gamma,
            beta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> &DenseVector {
        &self.theta
    }

    pub fn ground_truth(&self) -> &DenseVector {
        &self.ground_truth
    }

    pub fn cost(&self) -> &DenseMatrix {
        &self.cost
    }

    pub fn blur(&self) -> LinearMap {
        LinearMap::Convolution(self.blur.clone())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl SaddleProblem for OtInverseProblem {
    fn primal_dim(&self) -> usize {
        self.n
    }

    fn dual_dim(&self) -> usize {
        2 * self.n - 1
    }

    fn coupling(&self) -> &LinearMap {
        &self.coupling
    }

    fn primal_entropy(&self) -> Entropy {
        Entropy::ShannonBoltzmann
    }

    fn dual_entropy(&self) -> Entropy {
        Entropy::EuclideanEnergy
    }

    fn primal_smoothness(&self) -> f64 {
        0.0
    }

    fn dual_smoothness(&self) -> f64 {
        1.0 / self.gamma
    }

    fn f_value(&self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn f_grad(&self, x: &[f64]) -> Result<DenseVector> {
        Ok(DenseVector::zeros(x.len()))
    }

    fn h_star_value(&self, mu: &[f64]) -> Result<f64> {
        if mu.len() != self.dual_dim() {
            return Err(Error::shape("h_star_value", self.dual_dim(), mu.len()));
        }
        Ok(ot_semidual_value_grad(&mu[..self.n], &self.theta, &self.cost, self.gamma)?.0)
    }

    fn h_star_grad(&self, mu: &[f64]) -> Result<DenseVector> {
        if mu.len() != self.dual_dim() {
            return Err(Error::shape("h_star_grad", self.dual_dim(), mu.len()));
        }
        let (_, g) = ot_semidual_value_grad(&mu[..self.n], &self.theta, &self.cost, self.gamma)?;
        let mut full = g.into_vec();
        full.resize(self.dual_dim(), 0.0);
        DenseVector::new(full)
    }

    fn primal_prox(&self, x: &BregmanPoint, drift: &[f64], step: f64) -> Result<BregmanPoint> {
        kl_prox_simplex(x, drift, step)
    }

    /// Gradient step in `tau`, clipped step in `zeta`.
    fn dual_prox(&self, mu: &BregmanPoint, drift: &[f64], step: f64) -> Result<BregmanPoint> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Parameter(format!(
                "step must be positive, got {step}"
            )));
        }
        if drift.len() != self.dual_dim() || mu.len() != self.dual_dim() {
            return Err(Error::shape(
                "OtInverseProblem::dual_prox",
                self.dual_dim(),
                drift.len(),
            ));
        }
        let out: Vec<f64> = mu
            .coords()
            .iter()
            .zip(drift)
            .enumerate()
            .map(|(i, (m, d))| {
                let v = m - step * d;
                if i < self.n {
                    v
                } else {
                    v.clamp(-self.beta, self.beta)
                }
            })
            .collect();
        Ok(BregmanPoint::plain(DenseVector::new(out)?))
    }

    fn check_primal(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::shape("check_primal", self.n, x.len()));
        }
        check_simplex(x)
    }

    fn check_dual(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.dual_dim() {
            return Err(Error::shape("check_dual", self.dual_dim(), mu.len()));
        }
        check_ball(&mu[self.n..], self.beta)
    }

    fn initial_point(&self) -> Iterate {
        Iterate {
            x: BregmanPoint::uniform_simplex(self.n),
            mu: BregmanPoint::plain(DenseVector::zeros(self.dual_dim())),
        }
    }
}

/// Synthetic instance on an `n`-point grid: the two-box ground truth blurred by
/// the bump kernel of half-width `kernel_radius`, mixed with weight `noise_level`
/// against a flat Dirichlet draw.
pub fn build_ot_inverse(
    n: usize,
    seed: u64,
    gamma: f64,
    beta: f64,
    noise_level: f64,
    kernel_radius: usize,
) -> Result<OtInverseProblem> {
    if n < 4 {
        return Err(Error::Parameter(format!(
            "grid size must be at least 4, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&noise_level) {
        return Err(Error::Parameter(format!(
            "noise level must lie in [0, 1], got {noise_level}"
        )));
    }
    let blur = Convolution::bump(n, kernel_radius)?;
    let truth = two_box_ground_truth(n);
    let blurred = LinearMap::Convolution(blur.clone()).apply(&truth)?;
    let theta = if noise_level == 0.0 {
        blurred
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = draw.iter().sum();
        let mixed: Vec<f64> = blurred
            .iter()
            .zip(&draw)
            .map(|(c, d)| (1.0 - noise_level) * c + noise_level * d / total)
            .collect();
        let mass: f64 = mixed.iter().sum();
        DenseVector::new(mixed.into_iter().map(|v| v / mass).collect())?
    };
    OtInverseProblem::new(blur, quadratic_cost(n), theta, truth, gamma, beta)
}
