//! The stochastic Bregman primal-dual iteration.
//!
//! For a Lagrangian `L(x, mu) = f(x) + g(x) + <Tx, mu> - h*(mu) - l*(mu)` one step reads
//!
//! ```text
//! x+  = prox_g(x,  grad f(x)  + err_p + T^t mu,          lambda)
//! mu+ = prox_l(mu, grad h*(mu) + err_d - T (2 x+ - x),   nu)
//! ```
//!
//! where `prox_g(x, v, s) = argmin_u <v, u> + g(u) + D_p(u, x)/s` and likewise for the
//! dual. Ergodic averages run over `x_1, ..., x_k` (the initial point is excluded).

use serde::{Deserialize, Serialize};

use crate::bregman::{BregmanPoint, Entropy};
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseVector, LinearMap};
use crate::oracle::GradientOracle;

/// A convex-concave saddle problem with relatively smooth terms.
///
/// `f` and `h*` are finite sums of `primal_summands()` and `dual_summands()`
/// terms; the default partial gradients only support the full index set.
pub trait SaddleProblem: Sync {
    fn primal_dim(&self) -> usize;
    fn dual_dim(&self) -> usize;
    fn coupling(&self) -> &LinearMap;
    fn primal_entropy(&self) -> Entropy;
    fn dual_entropy(&self) -> Entropy;
    /// Relative smoothness constant of `f` with respect to the primal entropy.
    fn primal_smoothness(&self) -> f64;
    /// Relative smoothness constant of `h*` with respect to the dual entropy.
    fn dual_smoothness(&self) -> f64;

    fn f_value(&self, x: &[f64]) -> Result<f64>;
    fn f_grad(&self, x: &[f64]) -> Result<DenseVector>;
    fn h_star_value(&self, mu: &[f64]) -> Result<f64>;
    fn h_star_grad(&self, mu: &[f64]) -> Result<DenseVector>;

    fn primal_summands(&self) -> usize {
        1
    }

    fn dual_summands(&self) -> usize {
        1
    }

    fn f_partial_grad(&self, batch: &[usize], x: &[f64]) -> Result<DenseVector> {
        full_batch_only(batch, self.primal_summands())?;
        self.f_grad(x)
    }

    fn h_star_partial_grad(&self, batch: &[usize], mu: &[f64]) -> Result<DenseVector> {
        full_batch_only(batch, self.dual_summands())?;
        self.h_star_grad(mu)
    }

    /// D-prox of `g` plus the primal constraint.
    fn primal_prox(&self, x: &BregmanPoint, drift: &[f64], step: f64) -> Result<BregmanPoint>;
    /// D-prox of `l*` plus the dual constraint.
    fn dual_prox(&self, mu: &BregmanPoint, drift: &[f64], step: f64) -> Result<BregmanPoint>;

    /// Domain error unless `x` satisfies the primal constraints.
    fn check_primal(&self, x: &[f64]) -> Result<()>;
    /// Domain error unless `mu` satisfies the dual constraints.
    fn check_dual(&self, mu: &[f64]) -> Result<()>;

    /// Finite part of `g` on its constraint set.
    fn g_value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    /// Finite part of `l*` on its constraint set.
    fn l_star_value(&self, _mu: &[f64]) -> f64 {
        0.0
    }

    fn initial_point(&self) -> Iterate;

    /// `L(x, mu)` at feasible points; constraint violations are domain errors.
    fn lagrangian(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        self.check_primal(x)?;
        self.check_dual(mu)?;
        let tx = self.coupling().apply(x)?;
        Ok(self.f_value(x)? + self.g_value(x) + dot(&tx, mu)
            - self.h_star_value(mu)?
            - self.l_star_value(mu))
    }
}

fn full_batch_only(batch: &[usize], summands: usize) -> Result<()> {
    if batch.len() == summands && batch.iter().enumerate().all(|(i, b)| i == *b) {
        Ok(())
    } else {
        Err(Error::Parameter(
            "this problem only provides full gradients".into(),
        ))
    }
}

/// A primal-dual pair `w = (x, mu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub x: BregmanPoint,
    pub mu: BregmanPoint,
}

/// Step sizes `(lambda_k, nu_k)`: positive, nondecreasing and bounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant {
        primal: f64,
        dual: f64,
    },
    /// `s_k = limit - (limit - start) 2^(-k / half_life)` in each component.
    Increasing {
        primal_start: f64,
        primal_limit: f64,
        dual_start: f64,
        dual_limit: f64,
        half_life: f64,
    },
}

impl StepSchedule {
    pub fn constant(primal: f64, dual: f64) -> Result<Self> {
        let s = StepSchedule::Constant { primal, dual };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        match *self {
            StepSchedule::Constant { primal, dual } => {
                positive("primal step", primal)?;
                positive("dual step", dual)
            }
            StepSchedule::Increasing {
                primal_start,
                primal_limit,
                dual_start,
                dual_limit,
                half_life,
            } => {
                positive("primal start", primal_start)?;
                positive("dual start", dual_start)?;
                positive("half life", half_life)?;
                if primal_limit < primal_start
                    || dual_limit < dual_start
                    || !primal_limit.is_finite()
                    || !dual_limit.is_finite()
                {
                    return Err(Error::Parameter(
                        "step limits must be finite and no smaller than the starting steps".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `(lambda_k, nu_k)`.
    pub fn at(&self, k: u64) -> (f64, f64) {
        match *self {
            StepSchedule::Constant { primal, dual } => (primal, dual),
            StepSchedule::Increasing {
                primal_start,
                primal_limit,
                dual_start,
                dual_limit,
                half_life,
            } => {
                let decay = (-(k as f64) / half_life).exp2();
                (
                    primal_limit - (primal_limit - primal_start) * decay,
                    dual_limit - (dual_limit - dual_start) * decay,
                )
            }
        }
    }

    /// `(lambda_inf, nu_inf)`.
    pub fn limits(&self) -> (f64, f64) {
        match *self {
            StepSchedule::Constant { primal, dual } => (primal, dual),
            StepSchedule::Increasing {
                primal_limit,
                dual_limit,
                ..
            } => (primal_limit, dual_limit),
        }
    }
}

/// `lambda = safety / (L_p + ||T||)`, `nu = safety / (L_d + ||T||)`.
pub fn default_step_sizes(
    primal_smoothness: f64,
    dual_smoothness: f64,
    opnorm: f64,
    safety: f64,
) -> Result<(f64, f64)> {
    if !(opnorm > 0.0 && opnorm.is_finite()) {
        return Err(Error::Parameter(format!(
            "operator norm must be positive, got {opnorm}"
        )));
    }
    if !(primal_smoothness >= 0.0 && dual_smoothness >= 0.0) {
        return Err(Error::Parameter(
            "smoothness constants must be nonnegative".into(),
        ));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::Parameter(format!(
            "step safety must lie in (0, 1], got {safety}"
        )));
    }
    Ok((
        safety / (primal_smoothness + opnorm),
        safety / (dual_smoothness + opnorm),
    ))
}

/// Primal and dual gradient oracles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Oracles {
    pub primal: GradientOracle,
    pub dual: GradientOracle,
}

impl Oracles {
    pub fn exact<P: SaddleProblem + ?Sized>(problem: &P) -> Self {
        Oracles {
            primal: GradientOracle::exact(problem.primal_summands()),
            dual: GradientOracle::exact(problem.dual_summands()),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.primal.is_exact() && self.dual.is_exact()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    /// Number of completed steps.
    pub k: u64,
    pub current: Iterate,
    pub previous: Iterate,
    pub x_bar: DenseVector,
    pub mu_bar: DenseVector,
}

impl SolverState {
    pub fn new(start: Iterate) -> Self {
        SolverState {
            k: 0,
            x_bar: start.x.coords().clone(),
            mu_bar: start.mu.coords().clone(),
            previous: start.clone(),
            current: start,
        }
    }

    pub fn x(&self) -> &DenseVector {
        self.current.x.coords()
    }

    pub fn mu(&self) -> &DenseVector {
        self.current.mu.coords()
    }
}

/// One step, updating `state` in place.
pub fn sbpd_step<P: SaddleProblem + ?Sized>(
    problem: &P,
    schedule: &StepSchedule,
    state: &mut SolverState,
    oracles: &Oracles,
) -> Result<()> {
    let k = state.k;
    let (lambda, nu) = schedule.at(k);
    let coupling = problem.coupling();
    let x = state.current.x.coords();
    let mu = state.current.mu.coords();

    let mut drift = oracles.primal.estimate(
        k,
        x,
        |x| problem.f_grad(x).map(DenseVector::into_vec),
        |b, x| problem.f_partial_grad(b, x).map(DenseVector::into_vec),
    )?;
    let t_adj_mu = coupling.adjoint_apply(mu)?;
    for (d, t) in drift.as_mut_slice().iter_mut().zip(t_adj_mu.iter()) {
        *d += t;
    }
    let x_next = problem.primal_prox(&state.current.x, &drift, lambda)?;

    let extrapolated: Vec<f64> = x_next
        .coords()
        .iter()
        .zip(x.iter())
        .map(|(a, b)| 2.0 * a - b)
        .collect();
    let t_ext = coupling.apply(&extrapolated)?;
    let mut dual_drift = oracles.dual.estimate(
        k,
        mu,
        |m| problem.h_star_grad(m).map(DenseVector::into_vec),
        |b, m| problem.h_star_partial_grad(b, m).map(DenseVector::into_vec),
    )?;
    for (d, t) in dual_drift.as_mut_slice().iter_mut().zip(t_ext.iter()) {
        *d -= t;
    }
    let mu_next = problem.dual_prox(&state.current.mu, &dual_drift, nu)?;

    let next = Iterate {
        x: x_next,
        mu: mu_next,
    };
    state.previous = std::mem::replace(&mut state.current, next);
    state.k = k + 1;
    if k == 0 {
        state.x_bar = state.current.x.coords().clone();
        state.mu_bar = state.current.mu.coords().clone();
    } else {
        let w = 1.0 / (k + 1) as f64;
        running_mean(state.x_bar.as_mut_slice(), state.current.x.coords(), w);
        running_mean(state.mu_bar.as_mut_slice(), state.current.mu.coords(), w);
    }
    Ok(())
}

fn running_mean(mean: &mut [f64], sample: &[f64], weight: f64) {
    for (m, s) in mean.iter_mut().zip(sample) {
        *m += (s - *m) * weight;
    }
}

/// `||x_{k+1} - x_k||_1 + ||mu_{k+1} - mu_k||_2`.
pub fn asymptotic_residual(previous: &Iterate, next: &Iterate) -> f64 {
    let dx: f64 = previous
        .x
        .coords()
        .iter()
        .zip(next.x.coords().iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    let dmu: f64 = previous
        .mu
        .coords()
        .iter()
        .zip(next.mu.coords().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    dx + dmu
}

/// `L(x, mu_ref) - L(x_ref, mu)`.
pub fn lagrangian_gap<P: SaddleProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    mu: &[f64],
    x_ref: &[f64],
    mu_ref: &[f64],
) -> Result<f64> {
    Ok(problem.lagrangian(x, mu_ref)? - problem.lagrangian(x_ref, mu)?)
}

/// `(1/lambda) D_p(x_ref, x) + (1/nu) D_d(mu_ref, mu)`.
pub fn scaled_divergence<P: SaddleProblem + ?Sized>(
    problem: &P,
    steps: (f64, f64),
    x_ref: &[f64],
    mu_ref: &[f64],
    w: &Iterate,
) -> Result<f64> {
    let dp = problem.primal_entropy().divergence_from(x_ref, &w.x)?;
    let dd = problem.dual_entropy().divergence_from(mu_ref, &w.mu)?;
    Ok(dp / steps.0 + dd / steps.1)
}

/// `<T(x_ref - x), mu_ref - mu>`.
pub fn coupling_term<P: SaddleProblem + ?Sized>(
    problem: &P,
    x_ref: &[f64],
    mu_ref: &[f64],
    w: &Iterate,
) -> Result<f64> {
    let dx = DenseVector::from_raw(
        x_ref
            .iter()
            .zip(w.x.coords().iter())
            .map(|(a, b)| a - b)
            .collect(),
    );
    let tdx = problem.coupling().apply(&dx)?;
    Ok(tdx
        .iter()
        .zip(mu_ref.iter().zip(w.mu.coords().iter()))
        .map(|(t, (a, b))| t * (a - b))
        .sum())
}

/// `(1/Lambda_0) D(w_ref, w_0) - M(w_ref, w_0)`: the constant of the `C/k`
/// bound on the ergodic gap in the deterministic regime.
pub fn rate_constant<P: SaddleProblem + ?Sized>(
    problem: &P,
    schedule: &StepSchedule,
    x_ref: &[f64],
    mu_ref: &[f64],
    start: &Iterate,
) -> Result<f64> {
    problem.check_primal(x_ref)?;
    problem.check_dual(mu_ref)?;
    Ok(
        scaled_divergence(problem, schedule.at(0), x_ref, mu_ref, start)?
            - coupling_term(problem, x_ref, mu_ref, start)?,
    )
}

/// Outcome of the per-step energy estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySlack {
    /// Right side minus left side; nonnegative in exact arithmetic.
    pub slack: f64,
    /// Magnitude of the largest term entering the estimate.
    pub scale: f64,
}

impl EnergySlack {
    pub const RELATIVE_TOL: f64 = 1e-8;

    pub fn tolerance(&self) -> f64 {
        Self::RELATIVE_TOL * (1.0 + self.scale)
    }

    pub fn holds(&self) -> bool {
        self.slack >= -self.tolerance()
    }
}

/// Slack of the deterministic one-step energy estimate between `w_k` (iterate `k`)
/// and `w_{k+1}`:
///
/// ```text
/// [ D(w,w_k)/Lambda_k - M(w,w_k) ]
///   - [ L(x_{k+1},mu) - L(x,mu_{k+1}) + D(w,w_{k+1})/Lambda_{k+1} - M(w,w_{k+1}) ]
/// ```
pub fn estimate_inequality_slack<P: SaddleProblem + ?Sized>(
    problem: &P,
    schedule: &StepSchedule,
    k: u64,
    w_k: &Iterate,
    w_next: &Iterate,
    x_ref: &[f64],
    mu_ref: &[f64],
) -> Result<EnergySlack> {
    problem.check_primal(x_ref)?;
    problem.check_dual(mu_ref)?;
    let d_k = scaled_divergence(problem, schedule.at(k), x_ref, mu_ref, w_k)?;
    let m_k = coupling_term(problem, x_ref, mu_ref, w_k)?;
    let d_next = scaled_divergence(problem, schedule.at(k + 1), x_ref, mu_ref, w_next)?;
    let m_next = coupling_term(problem, x_ref, mu_ref, w_next)?;
    let l_primal = problem.lagrangian(w_next.x.coords(), mu_ref)?;
    let l_dual = problem.lagrangian(x_ref, w_next.mu.coords())?;
    let slack = (d_k - m_k) - (l_primal - l_dual + d_next - m_next);
    let scale = [d_k, m_k, d_next, m_next, l_primal, l_dual]
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(EnergySlack { slack, scale })
}

/// Stops a run once the pointwise gap stays below `tolerance` for `patience`
/// consecutive checks.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStop {
    tolerance: f64,
    patience: usize,
    streak: usize,
}

impl EarlyStop {
    pub const DEFAULT_PATIENCE: usize = 100;

    pub fn new(tolerance: f64) -> Self {
        EarlyStop {
            tolerance,
            patience: Self::DEFAULT_PATIENCE,
            streak: 0,
        }
    }

    /// Records one gap value; returns true when the run should stop.
    pub fn observe(&mut self, gap: f64) -> bool {
        if gap.abs() < self.tolerance {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= self.patience
    }
}

/// Runs `iterations` deterministic-or-stochastic steps from the problem's initial point.
pub fn solve<P: SaddleProblem + ?Sized>(
    problem: &P,
    schedule: &StepSchedule,
    oracles: &Oracles,
    iterations: u64,
) -> Result<SolverState> {
    let mut state = SolverState::new(problem.initial_point());
    for _ in 0..iterations {
        sbpd_step(problem, schedule, &mut state, oracles)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bregman::{kl_prox_simplex, linf_ball_prox};
    use crate::linalg::DenseMatrix;
    use crate::oracle::OracleMode;
    use crate::problems::{build_simplex_tv, EuclideanBoxProblem};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schedule_for<P: SaddleProblem>(p: &P) -> StepSchedule {
        let norm = crate::linalg::operator_norm(p.coupling(), 1e-12, 100_000)
            .unwrap()
            .value;
        let (l, n) =
            default_step_sizes(p.primal_smoothness(), p.dual_smoothness(), norm, 1.0).unwrap();
        StepSchedule::constant(l, n).unwrap()
    }

    #[test]
    fn default_steps_examples() {
        assert_eq!(
            default_step_sizes(6.0, 0.0, 2.0, 1.0).unwrap(),
            (0.125, 0.5)
        );
        assert_eq!(default_step_sizes(0.0, 0.0, 1.0, 1.0).unwrap(), (1.0, 1.0));
        assert!(matches!(
            default_step_sizes(1.0, 1.0, 0.0, 1.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            default_step_sizes(1.0, 1.0, 1.0, 1.5),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn increasing_schedule_is_monotone_and_bounded() {
        let s = StepSchedule::Increasing {
            primal_start: 0.1,
            primal_limit: 0.2,
            dual_start: 0.5,
            dual_limit: 1.0,
            half_life: 10.0,
        };
        s.validate().unwrap();
        let mut prev = s.at(0);
        assert_eq!(prev, (0.1, 0.5));
        for k in 1..500 {
            let cur = s.at(k);
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1);
            assert!(cur.0 <= 0.2 && cur.1 <= 1.0);
            prev = cur;
        }
        let bad = StepSchedule::Increasing {
            primal_start: 0.3,
            primal_limit: 0.2,
            dual_start: 0.5,
            dual_limit: 1.0,
            half_life: 10.0,
        };
        assert!(bad.validate().is_err());
    }

    /// `f = h* = 0`, `T = 0`, simplex and ball constraints.
    struct ZeroProblem {
        coupling: LinearMap,
    }

    impl SaddleProblem for ZeroProblem {
        fn primal_dim(&self) -> usize {
            4
        }
        fn dual_dim(&self) -> usize {
            3
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
            0.0
        }
        fn f_value(&self, _x: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
        fn f_grad(&self, x: &[f64]) -> Result<DenseVector> {
            Ok(DenseVector::zeros(x.len()))
        }
        fn h_star_value(&self, _mu: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
        fn h_star_grad(&self, mu: &[f64]) -> Result<DenseVector> {
            Ok(DenseVector::zeros(mu.len()))
        }
        fn primal_prox(&self, x: &BregmanPoint, drift: &[f64], step: f64) -> Result<BregmanPoint> {
            kl_prox_simplex(x, drift, step)
        }
        fn dual_prox(&self, mu: &BregmanPoint, drift: &[f64], step: f64) -> Result<BregmanPoint> {
            Ok(BregmanPoint::plain(linf_ball_prox(
                mu.coords(),
                drift,
                step,
                0.5,
            )?))
        }
        fn check_primal(&self, _x: &[f64]) -> Result<()> {
            Ok(())
        }
        fn check_dual(&self, _mu: &[f64]) -> Result<()> {
            Ok(())
        }
        fn initial_point(&self) -> Iterate {
            let x = DenseVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
            Iterate {
                x: BregmanPoint::positive(x).unwrap(),
                mu: BregmanPoint::plain(DenseVector::new(vec![0.5, -0.2, 0.0]).unwrap()),
            }
        }
    }

    #[test]
    fn zero_problem_is_a_fixed_point() {
        let p = ZeroProblem {
            coupling: LinearMap::zero(4, 3).unwrap(),
        };
        let schedule = StepSchedule::constant(0.3, 0.7).unwrap();
        let mut state = SolverState::new(p.initial_point());
        let start = state.current.clone();
        for _ in 0..5 {
            sbpd_step(&p, &schedule, &mut state, &Oracles::exact(&p)).unwrap();
            for (a, b) in state.x().iter().zip(start.x.coords().iter()) {
                assert_relative_eq!(*a, *b, epsilon = 1e-15);
            }
            assert_eq!(state.mu(), start.mu.coords());
        }
    }

    #[test]
    fn first_step_composes_module_operations() {
        let p = build_simplex_tv(2, 3, 11, 0.2).unwrap();
        let schedule = schedule_for(&p);
        let (lambda, nu) = schedule.at(0);
        let mut state = SolverState::new(p.initial_point());
        sbpd_step(&p, &schedule, &mut state, &Oracles::exact(&p)).unwrap();

        let x0 = BregmanPoint::uniform_simplex(2);
        let grad = p.f_grad(x0.coords()).unwrap();
        let expect_x = kl_prox_simplex(&x0, &grad, lambda).unwrap();
        assert_eq!(state.x(), expect_x.coords());
        let ext: Vec<f64> = expect_x
            .coords()
            .iter()
            .zip(x0.coords().iter())
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        let t_ext = p.coupling().apply(&ext).unwrap();
        let drift: Vec<f64> = t_ext.iter().map(|t| -t).collect();
        let expect_mu = linf_ball_prox(&[0.0], &drift, nu, 0.2).unwrap();
        assert_eq!(state.mu(), &expect_mu);
    }

    #[test]
    fn euclidean_step_matches_hand_computation() {
        let t = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let p = EuclideanBoxProblem::new(t, 1.0, 0.75, vec![0.4, -0.6], vec![0.3, 0.7]).unwrap();
        let (tau, sigma) = (0.3, 0.4);
        let schedule = StepSchedule::constant(tau, sigma).unwrap();
        let mut state = SolverState::new(p.initial_point());
        sbpd_step(&p, &schedule, &mut state, &Oracles::exact(&p)).unwrap();

        // x1 = clip(x0 - tau T^t mu0, -1, 1)
        let x1 = [
            (0.4f64 - 0.3 * (0.3 - 0.7)).clamp(-1.0, 1.0),
            (-0.6f64 - 0.3 * (2.0 * 0.3 + 0.5 * 0.7)).clamp(-1.0, 1.0),
        ];
        let xe = [2.0 * x1[0] - 0.4, 2.0 * x1[1] + 0.6];
        let mu1 = [
            (0.3f64 + 0.4 * (1.0 * xe[0] + 2.0 * xe[1])).clamp(-0.75, 0.75),
            (0.7f64 + 0.4 * (-xe[0] + 0.5 * xe[1])).clamp(-0.75, 0.75),
        ];
        for i in 0..2 {
            assert!((state.x()[i] - x1[i]).abs() <= 1e-12);
            assert!((state.mu()[i] - mu1[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn ergodic_average_matches_direct_mean() {
        let p = build_simplex_tv(6, 5, 3, 0.1).unwrap();
        let schedule = schedule_for(&p);
        let oracles = Oracles {
            primal: GradientOracle::new(OracleMode::PaperPartial, 2, 5, 9).unwrap(),
            dual: GradientOracle::exact(1),
        };
        let mut state = SolverState::new(p.initial_point());
        let mut sum_x = [0.0; 6];
        let mut sum_mu = [0.0; 5];
        let iterations = 10_000;
        for _ in 0..iterations {
            sbpd_step(&p, &schedule, &mut state, &oracles).unwrap();
            sum_x
                .iter_mut()
                .zip(state.x().iter())
                .for_each(|(s, v)| *s += v);
            sum_mu
                .iter_mut()
                .zip(state.mu().iter())
                .for_each(|(s, v)| *s += v);
        }
        for (s, m) in sum_x.iter().zip(state.x_bar.iter()) {
            assert_relative_eq!(s / iterations as f64, *m, max_relative = 1e-10);
        }
        for (s, m) in sum_mu.iter().zip(state.mu_bar.iter()) {
            assert!((s / iterations as f64 - m).abs() <= 1e-10 * (1.0 + m.abs()));
        }
    }

    #[test]
    fn iterates_stay_feasible() {
        let p = build_simplex_tv(12, 10, 4, 0.05).unwrap();
        let schedule = schedule_for(&p);
        let oracles = Oracles {
            primal: GradientOracle::new(OracleMode::ScaledUnbiased, 3, 10, 1).unwrap(),
            dual: GradientOracle::exact(1),
        };
        let mut state = SolverState::new(p.initial_point());
        for _ in 0..2000 {
            sbpd_step(&p, &schedule, &mut state, &oracles).unwrap();
            assert!(state.x().iter().all(|v| *v > 0.0));
            assert!((state.x().sum() - 1.0).abs() <= 1e-12);
            assert!(state.mu().norm_inf() <= 0.05);
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let p = build_simplex_tv(8, 8, 5, 0.1).unwrap();
        let schedule = schedule_for(&p);
        let oracles = Oracles {
            primal: GradientOracle::new(OracleMode::PaperPartial, 3, 8, 77).unwrap(),
            dual: GradientOracle::exact(1),
        };
        let a = solve(&p, &schedule, &oracles, 300).unwrap();
        let b = solve(&p, &schedule, &oracles, 300).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn energy_estimate_holds_along_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = build_simplex_tv(10, 8, 6, 0.2).unwrap();
        let schedule = schedule_for(&p);
        for _ in 0..3 {
            let raw: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let x_ref: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let mu_ref: Vec<f64> = (0..9).map(|_| rng.random_range(-0.2..0.2)).collect();
            let mut state = SolverState::new(p.initial_point());
            for _ in 0..100 {
                let before = state.current.clone();
                sbpd_step(&p, &schedule, &mut state, &Oracles::exact(&p)).unwrap();
                let e = estimate_inequality_slack(
                    &p,
                    &schedule,
                    state.k - 1,
                    &before,
                    &state.current,
                    &x_ref,
                    &mu_ref,
                )
                .unwrap();
                assert!(e.holds(), "{e:?}");
            }
        }
    }

    #[test]
    fn energy_estimate_rejects_infeasible_reference() {
        let p = build_simplex_tv(3, 3, 6, 0.2).unwrap();
        let schedule = schedule_for(&p);
        let w = p.initial_point();
        assert!(matches!(
            estimate_inequality_slack(&p, &schedule, 0, &w, &w, &[0.5, 0.5, 0.5], &[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            estimate_inequality_slack(&p, &schedule, 0, &w, &w, &[0.2, 0.3, 0.5], &[0.0, 0.3]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gap_and_residual_identities() {
        let p = build_simplex_tv(5, 5, 2, 0.2).unwrap();
        let w = p.initial_point();
        assert_eq!(asymptotic_residual(&w, &w), 0.0);
        let x = w.x.coords();
        let mu = w.mu.coords();
        assert_eq!(lagrangian_gap(&p, x, mu, x, mu).unwrap(), 0.0);
    }

    #[test]
    fn early_stop_needs_a_full_streak() {
        let mut stop = EarlyStop::new(1e-3);
        for _ in 0..99 {
            assert!(!stop.observe(1e-4));
        }
        assert!(!stop.observe(1.0));
        for _ in 0..99 {
            assert!(!stop.observe(0.0));
        }
        assert!(stop.observe(0.0));
    }
}
