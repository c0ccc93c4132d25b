//! Property sweeps over every module, runnable from the command line.
//!
//! The `fast` level uses reduced sample counts; `full` uses the counts the
//! library's documentation states for each property.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::bregman::{kl_prox_simplex, linf_ball_prox, pinsker_slack, BregmanPoint, Entropy};
use crate::error::Result;
use crate::linalg::{dot, operator_norm, Convolution, DenseMatrix, DenseVector, LinearMap};
use crate::oracle::{GradientOracle, OracleMode};
use crate::problems::{
    build_ot_inverse, build_simplex_tv, lse, ot_semidual_value_grad, quadratic_cost, softmax,
    EuclideanBoxProblem, SimplexTvProblem,
};
use crate::solver::{
    default_step_sizes, estimate_inequality_slack, sbpd_step, Oracles, SaddleProblem, SolverState,
    StepSchedule,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckLevel {
    Fast,
    Full,
}

impl CheckLevel {
    fn pick(self, fast: usize, full: usize) -> usize {
        match self {
            CheckLevel::Fast => fast,
            CheckLevel::Full => full,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// A probe that could not decide either way.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: Status,
    pub samples: usize,
    pub failures: usize,
    pub detail: String,
}

impl CheckOutcome {
    fn from_sweep(name: &str, sweep: &Sweep, detail: String) -> Self {
        CheckOutcome {
            name: name.into(),
            status: if sweep.failures == 0 {
                Status::Pass
            } else {
                Status::Fail
            },
            samples: sweep.samples,
            failures: sweep.failures,
            detail,
        }
    }

    fn single(name: &str, ok: bool, detail: String) -> Self {
        CheckOutcome {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            samples: 1,
            failures: usize::from(!ok),
            detail,
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        };
        write!(
            f,
            "{tag:<12} {:<40} {:>6} samples {:>4} failures  {}",
            self.name, self.samples, self.failures, self.detail
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub level: CheckLevel,
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.status != Status::Fail)
    }
}

/// Counts from a property sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sweep {
    pub samples: usize,
    pub failures: usize,
    /// Worst observed value of the swept quantity (its meaning depends on the sweep).
    pub worst: f64,
}

fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

type MapFn<'a> = &'a dyn Fn(&[f64]) -> Result<DenseVector>;

/// `|<Ax, y> - <x, A^t y>| <= 1e-10 (1 + |<Ax, y>|)` on random pairs.
pub fn adjoint_sweep(
    input_dim: usize,
    output_dim: usize,
    apply: MapFn<'_>,
    adjoint: MapFn<'_>,
    pairs: usize,
    seed: u64,
) -> Result<Sweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let x = random_vec(&mut rng, input_dim, 1.0);
        let y = random_vec(&mut rng, output_dim, 1.0);
        let lhs = dot(&apply(&x)?, &y);
        let rhs = dot(&x, &adjoint(&y)?);
        let err = (lhs - rhs).abs() / (1.0 + lhs.abs());
        worst = worst.max(err);
        if err > 1e-10 {
            failures += 1;
        }
    }
    Ok(Sweep {
        samples: pairs,
        failures,
        worst,
    })
}

/// Pinsker slack over random simplex pairs; fails below `-1e-12`.
pub fn pinsker_sweep(pairs: usize, seed: u64) -> Result<Sweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let n = rng.random_range(2..=20);
        let x = random_simplex(&mut rng, n);
        let y = random_simplex(&mut rng, n);
        let s = pinsker_slack(&x, &y)?;
        worst = worst.min(s);
        if s < -1e-12 {
            failures += 1;
        }
    }
    Ok(Sweep {
        samples: pairs,
        failures,
        worst,
    })
}

/// How pairs of points are drawn for [`descent_lemma_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSampling {
    /// `x = s u`, `y = t v` with independent `u, v` on the simplex.
    Orthant,
    /// `x = s u`, `y = t u` on a common ray, where the ratio of the two
    /// divergences equals `|Au|_1`.
    Radial,
}

/// Descent-lemma margins with the given constant over pairs of the positive
/// orthant, scales `s, t` drawn from `[0.5, 2]`. A violation is a margin below
/// `-1e-9 (1 + |f(x)|)`.
pub fn descent_lemma_sweep(
    problem: &SimplexTvProblem,
    constant: f64,
    sampling: PairSampling,
    pairs: usize,
    seed: u64,
) -> Result<Sweep> {
    let n = problem.primal_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let s = rng.random_range(0.5..2.0);
        let t = rng.random_range(0.5..2.0);
        let u = random_simplex(&mut rng, n);
        let v = match sampling {
            PairSampling::Orthant => random_simplex(&mut rng, n),
            PairSampling::Radial => u.clone(),
        };
        let x: Vec<f64> = u.iter().map(|w| s * w).collect();
        let y: Vec<f64> = v.iter().map(|w| t * w).collect();
        let margin = problem.descent_lemma_margin(constant, &x, &y)?;
        let scale = 1.0 + problem.f_value(&x)?.abs();
        worst = worst.min(margin / scale);
        if margin < -1e-9 * scale {
            failures += 1;
        }
    }
    Ok(Sweep {
        samples: pairs,
        failures,
        worst,
    })
}

/// Largest `||grad h*(a) - grad h*(b)|| / ||a - b||` over random pairs on an
/// `n`-point grid; fails above `1/gamma + 1e-9`.
pub fn lipschitz_ratio_sweep(n: usize, gamma: f64, pairs: usize, seed: u64) -> Result<Sweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = quadratic_cost(n);
    let theta = random_simplex(&mut rng, n);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let a = random_vec(&mut rng, n, 5.0 * gamma);
        let spread = [1e-4, 1e-2, 1.0, 10.0][i % 4] * gamma;
        let b: Vec<f64> = a
            .iter()
            .map(|v| v + rng.random_range(-spread..spread))
            .collect();
        let (_, ga) = ot_semidual_value_grad(&a, &theta, &cost, gamma)?;
        let (_, gb) = ot_semidual_value_grad(&b, &theta, &cost, gamma)?;
        let num = ga.sub(&gb).norm2();
        let den = DenseVector::new(a.iter().zip(&b).map(|(p, q)| p - q).collect())?.norm2();
        if den == 0.0 {
            continue;
        }
        let ratio = num / den;
        worst = worst.max(ratio);
        if ratio > 1.0 / gamma + 1e-9 {
            failures += 1;
        }
    }
    Ok(Sweep {
        samples: pairs,
        failures,
        worst,
    })
}

/// Monte-Carlo test of zero-mean oracle error at the initial point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasTest {
    pub draws: usize,
    /// `||mean error||_2`.
    pub mean_norm: f64,
    /// Empirical per-draw standard deviation `sqrt(sum ||e - mean||^2 / (N - 1))`.
    pub sigma: f64,
    /// `4 sigma / sqrt(N)`.
    pub threshold: f64,
}

impl BiasTest {
    pub fn unbiased(&self) -> bool {
        self.mean_norm <= self.threshold
    }
}

pub fn bias_test(
    problem: &SimplexTvProblem,
    mode: OracleMode,
    batch: usize,
    draws: usize,
    seed: u64,
) -> Result<BiasTest> {
    let oracle = GradientOracle::new(mode, batch, problem.primal_summands(), seed)?;
    let x = problem.initial_point().x.coords().clone();
    let exact = problem.f_grad(&x)?;
    let n = x.len();
    let mut errors = Vec::with_capacity(draws);
    for k in 0..draws as u64 {
        let g = oracle.estimate(
            k,
            &x,
            |_| Ok(exact.to_vec()),
            |b, x| problem.f_partial_grad(b, x).map(DenseVector::into_vec),
        )?;
        errors.push(g.sub(&exact));
    }
    let mut mean = vec![0.0; n];
    for e in &errors {
        mean.iter_mut()
            .zip(e.iter())
            .for_each(|(m, v)| *m += v / draws as f64);
    }
    let ss: f64 = errors
        .iter()
        .map(|e| {
            e.iter()
                .zip(&mean)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
        })
        .sum();
    let sigma = (ss / (draws as f64 - 1.0)).sqrt();
    Ok(BiasTest {
        draws,
        mean_norm: dot(&mean, &mean).sqrt(),
        sigma,
        threshold: 4.0 * sigma / (draws as f64).sqrt(),
    })
}

/// Bound on `||err||_2` for the partial oracle on a simplex-TV instance:
/// `||A||_F (max(|log a_min|, |log a_max|) sqrt(m - q) + ||log b||_2)`.
pub fn partial_error_bound(problem: &SimplexTvProblem, batch: usize) -> f64 {
    let a = problem.a().data();
    let frob = dot(a, a).sqrt();
    let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().copied().fold(0.0, f64::max);
    let log_bound = lo.ln().abs().max(hi.ln().abs());
    let m = problem.primal_summands();
    let log_b: f64 = problem
        .b()
        .iter()
        .map(|v| v.ln() * v.ln())
        .sum::<f64>()
        .sqrt();
    frob * (log_bound * ((m - batch) as f64).sqrt() + log_b)
}

fn operators(rng: &mut ChaCha8Rng) -> Result<Vec<LinearMap>> {
    let dense = DenseMatrix::new(6, 5, random_vec(rng, 30, 1.0))?;
    let conv = Convolution::bump(9, 2)?;
    Ok(vec![
        LinearMap::Dense(dense),
        LinearMap::forward_difference(7)?,
        LinearMap::Convolution(conv.clone()),
        LinearMap::stack(vec![
            LinearMap::Convolution(conv),
            LinearMap::forward_difference(9)?,
        ])?,
        LinearMap::zero(4, 3)?,
        LinearMap::identity(5)?,
    ])
}

fn schedule_for(problem: &dyn SaddleProblem) -> Result<StepSchedule> {
    let norm = operator_norm(problem.coupling(), 1e-9, 10_000)?.value;
    let (l, nu) = default_step_sizes(
        problem.primal_smoothness(),
        problem.dual_smoothness(),
        norm,
        1.0,
    )?;
    StepSchedule::constant(l, nu)
}

/// Runs every sweep at the given level.
pub fn run_check_suite(level: CheckLevel) -> Result<CheckReport> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5bd1);

    // linalg
    let pairs = level.pick(100, 100);
    for op in operators(&mut rng)? {
        let sweep = adjoint_sweep(
            op.input_dim(),
            op.output_dim(),
            &|x| op.apply(x),
            &|y| op.adjoint_apply(y),
            pairs,
            rng.random(),
        )?;
        out.push(CheckOutcome::from_sweep(
            &format!("adjoint consistency ({})", op.kind()),
            &sweep,
            format!("worst relative error {:.2e}", sweep.worst),
        ));
    }
    let mut lin_fail = 0;
    let lin_samples = level.pick(50, 200);
    for op in operators(&mut rng)? {
        for _ in 0..lin_samples / 6 + 1 {
            let x = random_vec(&mut rng, op.input_dim(), 1.0);
            let y = random_vec(&mut rng, op.input_dim(), 1.0);
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let lhs = op.apply(&combo)?;
            let rhs = op.apply(&x)?.scaled(a).add_scaled(b, &op.apply(&y)?);
            let scale = 1.0 + rhs.norm2();
            if lhs.sub(&rhs).norm2() > 1e-12 * scale {
                lin_fail += 1;
            }
        }
    }
    out.push(CheckOutcome {
        name: "linearity".into(),
        status: if lin_fail == 0 {
            Status::Pass
        } else {
            Status::Fail
        },
        samples: 6 * (lin_samples / 6 + 1),
        failures: lin_fail,
        detail: String::new(),
    });
    {
        let conv = LinearMap::Convolution(Convolution::bump(60, 10)?);
        let diff = LinearMap::forward_difference(60)?;
        let nf = operator_norm(&conv, 1e-9, 10_000)?.value;
        let nb = operator_norm(&diff, 1e-9, 10_000)?.value;
        let ns = operator_norm(&LinearMap::stack(vec![conv, diff])?, 1e-9, 10_000)?.value;
        let ok = nf.max(nb) <= ns * (1.0 + 1e-6) && ns <= (nf * nf + nb * nb).sqrt() * (1.0 + 1e-6);
        out.push(CheckOutcome::single(
            "stacked operator norm bounds",
            ok,
            format!("|F| {nf:.6} |B| {nb:.6} |(F;B)| {ns:.6}"),
        ));
    }

    // bregman
    let pairs = level.pick(200, 1000);
    for entropy in [Entropy::ShannonBoltzmann, Entropy::EuclideanEnergy] {
        let mut failures = 0;
        for _ in 0..pairs {
            let n = rng.random_range(1..12);
            let (x, y): (Vec<f64>, Vec<f64>) = match entropy {
                Entropy::ShannonBoltzmann => (
                    (0..n).map(|_| rng.random_range(0.0..3.0)).collect(),
                    (0..n).map(|_| rng.random_range(1e-6..3.0)).collect(),
                ),
                Entropy::EuclideanEnergy => {
                    (random_vec(&mut rng, n, 5.0), random_vec(&mut rng, n, 5.0))
                }
            };
            if entropy.divergence(&x, &y)? < 0.0 {
                failures += 1;
            }
        }
        out.push(CheckOutcome::from_sweep(
            &format!("divergence nonnegativity ({entropy:?})"),
            &Sweep {
                samples: pairs,
                failures,
                worst: 0.0,
            },
            String::new(),
        ));
    }
    {
        let samples = level.pick(20, 100);
        let mut failures = 0;
        let h = 1e-6;
        for _ in 0..samples {
            for entropy in [Entropy::ShannonBoltzmann, Entropy::EuclideanEnergy] {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..2.0)).collect();
                let g = entropy.gradient(&x)?;
                for i in 0..4 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (entropy.value(&xp)? - entropy.value(&xm)?) / (2.0 * h);
                    if (fd - g[i]).abs() > 1e-5 * (1.0 + g[i].abs()) {
                        failures += 1;
                    }
                }
            }
        }
        out.push(CheckOutcome::from_sweep(
            "entropy gradient vs finite differences",
            &Sweep {
                samples: samples * 8,
                failures,
                worst: 0.0,
            },
            String::new(),
        ));
    }
    {
        let samples = level.pick(200, 1000);
        let mut failures = 0;
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..2.0)).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..2.0)).collect();
            let z: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..2.0)).collect();
            let r = Entropy::ShannonBoltzmann.three_point_residual(&x, &y, &z)?;
            let scale = 1.0 + Entropy::ShannonBoltzmann.divergence(&x, &z)?.abs();
            worst = worst.max(r / scale);
            if r > 1e-10 * scale {
                failures += 1;
            }
            let x = random_vec(&mut rng, 5, 3.0);
            let y = random_vec(&mut rng, 5, 3.0);
            let z = random_vec(&mut rng, 5, 3.0);
            if Entropy::EuclideanEnergy.three_point_residual(&x, &y, &z)? > 1e-12 {
                failures += 1;
            }
        }
        out.push(CheckOutcome::from_sweep(
            "three-point identity",
            &Sweep {
                samples: 2 * samples,
                failures,
                worst,
            },
            format!("worst relative residual {worst:.2e}"),
        ));
    }
    {
        let sweep = pinsker_sweep(level.pick(1000, 10_000), rng.random())?;
        out.push(CheckOutcome::from_sweep(
            "pinsker inequality",
            &sweep,
            format!("smallest slack {:.3e}", sweep.worst),
        ));
    }
    {
        let instances = level.pick(1, 3);
        let mut failures = 0;
        for _ in 0..instances {
            let x = random_simplex(&mut rng, 3);
            let v = random_vec(&mut rng, 3, 2.0);
            let step = rng.random_range(0.2..1.5);
            let p = BregmanPoint::positive(DenseVector::new(x.clone())?)?;
            let out_p = kl_prox_simplex(&p, &v, step)?;
            let obj = |u: &[f64]| -> Result<f64> {
                Ok(dot(&v, u) + Entropy::ShannonBoltzmann.divergence(u, &x)? / step)
            };
            let h = 1e-3;
            let steps = 1000usize;
            let mut best = (vec![0.0; 3], f64::INFINITY);
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let u = [i as f64 * h, j as f64 * h, (steps - i - j) as f64 * h];
                    let val = obj(&u)?;
                    if val < best.1 {
                        best = (u.to_vec(), val);
                    }
                }
            }
            let val = obj(out_p.coords())?;
            let close = best
                .0
                .iter()
                .zip(out_p.coords().iter())
                .all(|(a, b)| (a - b).abs() <= 2e-3);
            if !(val <= best.1 + 1e-12 && close) {
                failures += 1;
            }
        }
        out.push(CheckOutcome::from_sweep(
            "simplex prox vs grid search",
            &Sweep {
                samples: instances,
                failures,
                worst: 0.0,
            },
            "grid step 1e-3".into(),
        ));
    }
    {
        let samples = level.pick(20, 100);
        let mut failures = 0;
        for _ in 0..samples {
            let (mu, v) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let (step, radius) = (rng.random_range(0.1..2.0), rng.random_range(0.0..2.0));
            let got = linf_ball_prox(&[mu], &[v], step, radius)?[0];
            let obj = |m: f64| v * m + (m - mu) * (m - mu) / (2.0 * step);
            let h = 1e-4;
            let count = (2.0 * radius / h).floor() as usize;
            let best = (0..=count)
                .map(|i| -radius + i as f64 * h)
                .chain(std::iter::once(radius))
                .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
                .unwrap_or(0.0);
            if (best - got).abs() > h || obj(got) > obj(best) + 1e-12 {
                failures += 1;
            }
        }
        out.push(CheckOutcome::from_sweep(
            "ball prox vs 1-D grid search",
            &Sweep {
                samples,
                failures,
                worst: 0.0,
            },
            String::new(),
        ));
    }

    // problems
    {
        let p = build_simplex_tv(20, 25, rng.random(), 0.1)?;
        let sweep = descent_lemma_sweep(
            &p,
            p.primal_smoothness(),
            PairSampling::Orthant,
            level.pick(200, 1000),
            rng.random(),
        )?;
        out.push(CheckOutcome::from_sweep(
            "descent lemma (column-sum constant)",
            &sweep,
            format!("smallest relative margin {:.3e}", sweep.worst),
        ));
        let rays = descent_lemma_sweep(
            &p,
            p.primal_smoothness(),
            PairSampling::Radial,
            level.pick(200, 1000),
            rng.random(),
        )?;
        out.push(CheckOutcome::from_sweep(
            "descent lemma along rays",
            &rays,
            format!("smallest relative margin {:.3e}", rays.worst),
        ));
        let halved = descent_lemma_sweep(
            &p,
            p.primal_smoothness() / 2.0,
            PairSampling::Radial,
            level.pick(200, 1000),
            rng.random(),
        )?;
        out.push(CheckOutcome {
            name: "descent lemma sharpness (half constant)".into(),
            status: if halved.failures > 0 {
                Status::Pass
            } else {
                Status::Inconclusive
            },
            samples: halved.samples,
            failures: 0,
            detail: format!("{} violations found", halved.failures),
        });

        let x = random_simplex(&mut rng, 20);
        let full = p.f_grad(&x)?;
        let mut sum = [0.0; 20];
        for i in 0..25 {
            let gi = p.f_partial_grad(&[i], &x)?;
            sum.iter_mut().zip(gi.iter()).for_each(|(s, v)| *s += v);
        }
        let ok = full
            .iter()
            .zip(&sum)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        out.push(CheckOutcome::single(
            "full gradient = sum of row gradients",
            ok,
            String::new(),
        ));

        let h = 1e-6;
        let mut failures = 0;
        for j in 0..20 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.f_value(&xp)? - p.f_value(&xm)?) / (2.0 * h);
            if (fd - full[j]).abs() > 1e-5 * (1.0 + full[j].abs()) {
                failures += 1;
            }
        }
        out.push(CheckOutcome::from_sweep(
            "fidelity gradient vs finite differences",
            &Sweep {
                samples: 20,
                failures,
                worst: 0.0,
            },
            String::new(),
        ));
    }
    {
        let samples = level.pick(20, 100);
        let mut failures = 0;
        let h = 1e-6;
        for _ in 0..samples {
            let gamma = [0.5, 1.0, 2.0][rng.random_range(0..3)];
            let tau = random_vec(&mut rng, 6, 3.0);
            let g = softmax(&tau, gamma);
            for i in 0..6 {
                let mut tp = tau.clone();
                let mut tm = tau.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (lse(&tp, gamma) - lse(&tm, gamma)) / (2.0 * h);
                if (fd - g[i]).abs() > 1e-5 * (1.0 + g[i].abs()) {
                    failures += 1;
                }
            }
        }
        out.push(CheckOutcome::from_sweep(
            "softmax vs finite differences of lse",
            &Sweep {
                samples: 6 * samples,
                failures,
                worst: 0.0,
            },
            String::new(),
        ));
    }
    {
        let n = level.pick(30, 108);
        let pairs = level.pick(100, 1000);
        for gamma in [0.5, 1.0, 2.0] {
            let sweep = lipschitz_ratio_sweep(n, gamma, pairs, rng.random())?;
            out.push(CheckOutcome::from_sweep(
                &format!("semidual Lipschitz ratio (gamma {gamma})"),
                &sweep,
                format!(
                    "largest ratio {:.4} vs bound {:.4}",
                    sweep.worst,
                    1.0 / gamma
                ),
            ));
        }
        let ot = build_ot_inverse(n, rng.random(), 1.0, 1.0, 0.1, 10)?;
        let mut failures = 0;
        for _ in 0..level.pick(20, 100) {
            let rho = random_simplex(&mut rng, n);
            let img = ot.blur().apply(&rho)?;
            if img.iter().any(|v| *v < 0.0) || (img.sum() - 1.0).abs() > 1e-12 {
                failures += 1;
            }
            let mu = random_vec(&mut rng, ot.dual_dim(), 1.0);
            let g = ot.h_star_grad(&mu)?;
            if g[..n].iter().any(|v| *v < 0.0) || (g[..n].iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                failures += 1;
            }
        }
        out.push(CheckOutcome::from_sweep(
            "transport maps preserve the simplex",
            &Sweep {
                samples: 2 * level.pick(20, 100),
                failures,
                worst: 0.0,
            },
            String::new(),
        ));
    }

    // oracle
    {
        let p = build_simplex_tv(50, 50, 7, 0.1)?;
        let draws = level.pick(2000, 10_000);
        let scaled = bias_test(&p, OracleMode::ScaledUnbiased, 5, draws, rng.random())?;
        out.push(CheckOutcome::single(
            "scaled oracle is unbiased",
            scaled.unbiased(),
            format!(
                "|mean| {:.3e} <= {:.3e}",
                scaled.mean_norm, scaled.threshold
            ),
        ));
        let partial = bias_test(&p, OracleMode::PaperPartial, 5, draws, rng.random())?;
        out.push(CheckOutcome::single(
            "partial oracle bias is detected",
            !partial.unbiased(),
            format!(
                "|mean| {:.3e} > {:.3e}",
                partial.mean_norm, partial.threshold
            ),
        ));

        let q = 10;
        let bound = partial_error_bound(&p, q);
        let oracle = GradientOracle::new(OracleMode::PaperPartial, q, 50, rng.random())?;
        let schedule = schedule_for(&p)?;
        let oracles = Oracles {
            primal: oracle.clone(),
            dual: GradientOracle::exact(1),
        };
        let mut state = SolverState::new(p.initial_point());
        let steps = level.pick(200, 2000);
        let mut failures = 0;
        let mut worst = 0.0f64;
        for _ in 0..steps {
            let (_, err) = oracle.estimate_with_error(
                state.k,
                state.x(),
                |x| p.f_grad(x).map(DenseVector::into_vec),
                |b, x| p.f_partial_grad(b, x).map(DenseVector::into_vec),
            )?;
            worst = worst.max(err.norm2());
            if err.norm2() > bound {
                failures += 1;
            }
            sbpd_step(&p, &schedule, &mut state, &oracles)?;
        }
        out.push(CheckOutcome::from_sweep(
            "partial oracle error bound",
            &Sweep {
                samples: steps,
                failures,
                worst,
            },
            format!("largest error {worst:.3e} vs bound {bound:.3e}"),
        ));
    }

    // solver
    {
        let p = build_simplex_tv(20, 20, rng.random(), 0.1)?;
        let schedule = schedule_for(&p)?;
        let steps = level.pick(50, 100);
        let refs = level.pick(2, 5);
        let mut failures = 0;
        let mut worst = f64::INFINITY;
        for _ in 0..refs {
            let x_ref = random_simplex(&mut rng, 20);
            let mu_ref = random_vec(&mut rng, 19, 0.1);
            let mut state = SolverState::new(p.initial_point());
            for _ in 0..steps {
                sbpd_step(&p, &schedule, &mut state, &Oracles::exact(&p))?;
                let e = estimate_inequality_slack(
                    &p,
                    &schedule,
                    state.k - 1,
                    &state.previous,
                    &state.current,
                    &x_ref,
                    &mu_ref,
                )?;
                worst = worst.min(e.slack / e.tolerance());
                if !e.holds() {
                    failures += 1;
                }
            }
        }
        out.push(CheckOutcome::from_sweep(
            "one-step energy estimate",
            &Sweep {
                samples: steps * refs,
                failures,
                worst,
            },
            format!("smallest slack/tolerance {worst:.3e}"),
        ));

        let iterations = level.pick(2000, 10_000);
        let oracles = Oracles {
            primal: GradientOracle::new(OracleMode::PaperPartial, 5, 20, rng.random())?,
            dual: GradientOracle::exact(1),
        };
        let mut state = SolverState::new(p.initial_point());
        let mut sum = [0.0; 20];
        let mut infeasible = 0;
        for _ in 0..iterations {
            sbpd_step(&p, &schedule, &mut state, &oracles)?;
            sum.iter_mut()
                .zip(state.x().iter())
                .for_each(|(s, v)| *s += v);
            if state
                .current
                .x
                .log_coords()
                .is_none_or(|l| l.iter().any(|v| !v.is_finite()))
                || (state.x().sum() - 1.0).abs() > 1e-12
                || state.mu().norm_inf() > p.beta()
            {
                infeasible += 1;
            }
        }
        let ok = sum
            .iter()
            .zip(state.x_bar.iter())
            .all(|(s, m)| (s / iterations as f64 - m).abs() <= 1e-10 * m.abs().max(1e-300));
        out.push(CheckOutcome::single(
            "ergodic average = direct mean",
            ok,
            format!("{iterations} steps"),
        ));
        out.push(CheckOutcome::from_sweep(
            "iterates stay feasible",
            &Sweep {
                samples: iterations,
                failures: infeasible,
                worst: 0.0,
            },
            String::new(),
        ));

        let mut a = SolverState::new(p.initial_point());
        let mut b = SolverState::new(p.initial_point());
        for _ in 0..200 {
            sbpd_step(&p, &schedule, &mut a, &oracles)?;
            sbpd_step(&p, &schedule, &mut b, &oracles)?;
        }
        out.push(CheckOutcome::single(
            "seeded runs are reproducible",
            a == b,
            String::new(),
        ));

        let t = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]])?;
        let e = EuclideanBoxProblem::new(t, 1.0, 0.75, vec![0.4, -0.6], vec![0.3, 0.7])?;
        let sched = StepSchedule::constant(0.3, 0.4)?;
        let mut s = SolverState::new(e.initial_point());
        sbpd_step(&e, &sched, &mut s, &Oracles::exact(&e))?;
        let x1 = [
            (0.4f64 - 0.3 * (0.3 - 0.7)).clamp(-1.0, 1.0),
            (-0.6f64 - 0.3 * (0.6 + 0.35)).clamp(-1.0, 1.0),
        ];
        let xe = [2.0 * x1[0] - 0.4, 2.0 * x1[1] + 0.6];
        let mu1 = [
            (0.3f64 + 0.4 * (xe[0] + 2.0 * xe[1])).clamp(-0.75, 0.75),
            (0.7f64 + 0.4 * (-xe[0] + 0.5 * xe[1])).clamp(-0.75, 0.75),
        ];
        let ok = (0..2)
            .all(|i| (s.x()[i] - x1[i]).abs() <= 1e-12 && (s.mu()[i] - mu1[i]).abs() <= 1e-12);
        out.push(CheckOutcome::single(
            "Euclidean step = classical primal-dual step",
            ok,
            String::new(),
        ));
    }

    Ok(CheckReport {
        level,
        outcomes: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suite_passes() {
        let report = run_check_suite(CheckLevel::Fast).unwrap();
        for o in &report.outcomes {
            assert_ne!(o.status, Status::Fail, "{o}");
        }
        assert!(report.passed());
        assert!(report.outcomes.len() > 25);
    }

    #[test]
    fn sign_error_in_adjoint_is_caught() {
        let op = LinearMap::forward_difference(6).unwrap();
        let broken = |y: &[f64]| op.adjoint_apply(y).map(|v| v.scaled(-1.0));
        let sweep = adjoint_sweep(6, 5, &|x| op.apply(x), &broken, 20, 1).unwrap();
        assert_eq!(sweep.failures, 20);
        let sound = adjoint_sweep(6, 5, &|x| op.apply(x), &|y| op.adjoint_apply(y), 20, 1).unwrap();
        assert_eq!(sound.failures, 0);
    }

    #[test]
    fn lipschitz_sweep_reaches_the_bound_scale() {
        // two points: the gradient Jacobian has norm at most 1/(2 gamma)
        for gamma in [0.5, 1.0, 2.0] {
            let s = lipschitz_ratio_sweep(2, gamma, 4000, 5).unwrap();
            assert_eq!(s.failures, 0);
            assert!(s.worst > 0.25 / gamma, "{} at gamma {gamma}", s.worst);
            assert!(s.worst <= 0.5 / gamma + 1e-9);
        }
    }

    #[test]
    fn descent_lemma_half_constant_is_violated() {
        let p = build_simplex_tv(10, 12, 3, 0.1).unwrap();
        assert_eq!(
            descent_lemma_sweep(&p, p.primal_smoothness(), PairSampling::Orthant, 300, 4)
                .unwrap()
                .failures,
            0
        );
        assert!(
            descent_lemma_sweep(
                &p,
                p.primal_smoothness() / 2.0,
                PairSampling::Radial,
                300,
                4
            )
            .unwrap()
            .failures
                > 0
        );
    }
}
