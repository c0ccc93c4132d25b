//! KL data fidelity on the probability simplex with a total-variation penalty:
//!
//! ```text
//! min_{x in simplex}  D_K(Ax, b) + beta ||Bx||_1
//! ```
//!
//! written as the saddle problem `f(x) = D_K(Ax, b)`, `g` the simplex indicator,
//! `T = B` (forward differences), `h* = 0` and `l*` the indicator of the
//! `l_inf` ball of radius `beta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bregman::{kl_prox_simplex, linf_ball_prox, BregmanPoint, Entropy};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, LinearMap};
use crate::solver::{Iterate, SaddleProblem};

use super::{check_ball, check_simplex};

/// `A^t log(Ax / b)`, the gradient of `x -> D_K(Ax, b)`.
pub fn kl_fidelity_grad(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<DenseVector> {
    let ax = a.matvec(x)?;
    if b.len() != ax.len() {
        return Err(Error::shape("kl_fidelity_grad", ax.len(), b.len()));
    }
    let ratio = log_ratio(&ax, b)?;
    a.matvec_t(&ratio)
}

fn log_ratio(ax: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    ax.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (u, v))| {
            if *u > 0.0 {
                Ok((u / v).ln())
            } else {
                Err(Error::Domain(format!("(Ax)_{i} = {u} is not positive")))
            }
        })
        .collect()
}

/// Relative smoothness constant of `x -> D_K(Ax, b)` with respect to the
/// Shannon-Boltzmann entropy: the largest column sum of `A`.
pub fn kl_rel_smooth_constant(a: &DenseMatrix) -> Result<f64> {
    if a.data().iter().any(|v| *v < 0.0) {
        return Err(Error::Construction("matrix has negative entries".into()));
    }
    if let Some(i) = (0..a.rows()).find(|&i| a.row(i).iter().all(|v| *v == 0.0)) {
        return Err(Error::Construction(format!("row {i} is identically zero")));
    }
    Ok(a.column_sums().into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexTvProblem {
    a: DenseMatrix,
    b: DenseVector,
    beta: f64,
    coupling: LinearMap,
    primal_smoothness: f64,
}

impl SimplexTvProblem {
    pub fn new(a: DenseMatrix, b: DenseVector, beta: f64) -> Result<Self> {
        if a.cols() < 2 {
            return Err(Error::Construction("need at least two unknowns".into()));
        }
        if b.len() != a.rows() {
            return Err(Error::shape("SimplexTvProblem::new", a.rows(), b.len()));
        }
        if a.data().iter().any(|v| *v <= 0.0) {
            return Err(Error::Construction("entries of A must be positive".into()));
        }
        if b.iter().any(|v| *v <= 0.0) {
            return Err(Error::Construction("entries of b must be positive".into()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "beta must be nonnegative, got {beta}"
            )));
        }
        let primal_smoothness = kl_rel_smooth_constant(&a)?;
        let coupling = LinearMap::forward_difference(a.cols())?;
        Ok(SimplexTvProblem {
            a,
            b,
            beta,
            coupling,
            primal_smoothness,
        })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseVector {
        &self.b
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `D_K(Ax, b) + beta ||Bx||_1` on the simplex.
    pub fn primal_objective(&self, x: &[f64]) -> Result<f64> {
        check_simplex(x)?;
        let bx = self.coupling.apply(x)?;
        Ok(self.f_value(x)? + self.beta * bx.norm1())
    }

    /// `f(y) + <grad f(y), x - y> + constant D_K(x, y) - f(x)`; nonnegative whenever
    /// `f` is `constant`-smooth relative to the entropy.
    pub fn descent_lemma_margin(&self, constant: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let fy = self.f_value(y)?;
        let gy = self.f_grad(y)?;
        let lin: f64 = gy
            .iter()
            .zip(x.iter().zip(y))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        let d = Entropy::ShannonBoltzmann.divergence(x, y)?;
        Ok(fy + lin + constant * d - self.f_value(x)?)
    }
}

impl SaddleProblem for SimplexTvProblem {
    fn primal_dim(&self) -> usize {
        self.a.cols()
    }

    fn dual_dim(&self) -> usize {
        self.a.cols() - 1
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
        self.primal_smoothness
    }

    fn dual_smoothness(&self) -> f64 {
        0.0
    }

    fn primal_summands(&self) -> usize {
        self.a.rows()
    }

    /// `D_K(Ax, b)` for any nonnegative `x` with `Ax > 0`.
    fn f_value(&self, x: &[f64]) -> Result<f64> {
        if x.iter().any(|v| *v < 0.0) {
            return Err(Error::Domain("argument has a negative entry".into()));
        }
        let ax = self.a.matvec(x)?;
        Entropy::ShannonBoltzmann.divergence(&ax, &self.b)
    }

    fn f_grad(&self, x: &[f64]) -> Result<DenseVector> {
        kl_fidelity_grad(&self.a, &self.b, x)
    }

    /// `sum_{i in batch} A_i^t log((Ax)_i / b_i)`.
    fn f_partial_grad(&self, batch: &[usize], x: &[f64]) -> Result<DenseVector> {
        if x.len() != self.a.cols() {
            return Err(Error::shape("f_partial_grad", self.a.cols(), x.len()));
        }
        let mut g = vec![0.0; x.len()];
        for &i in batch {
            if i >= self.a.rows() {
                return Err(Error::Parameter(format!("summand index {i} out of range")));
            }
            let row = self.a.row(i);
            let r = crate::linalg::dot(row, x);
            if r <= 0.0 {
                return Err(Error::Domain(format!("(Ax)_{i} = {r} is not positive")));
            }
            let c = (r / self.b[i]).ln();
            for (gj, aj) in g.iter_mut().zip(row) {
                *gj += c * aj;
            }
        }
        DenseVector::new(g)
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
            self.beta,
        )?))
    }

    fn check_primal(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.primal_dim() {
            return Err(Error::shape("check_primal", self.primal_dim(), x.len()));
        }
        check_simplex(x)
    }

    fn check_dual(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.dual_dim() {
            return Err(Error::shape("check_dual", self.dual_dim(), mu.len()));
        }
        check_ball(mu, self.beta)
    }

    fn initial_point(&self) -> Iterate {
        Iterate {
            x: BregmanPoint::uniform_simplex(self.primal_dim()),
            mu: BregmanPoint::plain(DenseVector::zeros(self.dual_dim())),
        }
    }
}

/// Random instance: `a_ij ~ U[0.01, 1.01]`, `b_i ~ U(0, 1]`, all i.i.d. from `seed`.
pub fn build_simplex_tv(n: usize, m: usize, seed: u64, beta: f64) -> Result<SimplexTvProblem> {
    if n < 2 || m < 2 {
        return Err(Error::Parameter(format!(
            "need n, m >= 2, got n = {n}, m = {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * n).map(|_| rng.random_range(0.01..=1.01)).collect();
    let b: Vec<f64> = (0..m).map(|_| 1.0 - rng.random::<f64>()).collect();
    SimplexTvProblem::new(DenseMatrix::new(m, n, data)?, DenseVector::new(b)?, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Exp1};

    fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn gradient_vanishes_when_data_fit() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let x = [0.25, 0.75];
        let b = a.matvec(&x).unwrap();
        let g = kl_fidelity_grad(&a, &b, &x).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));

        let a = DenseMatrix::from_rows(&[vec![2.0]]).unwrap();
        assert_eq!(
            kl_fidelity_grad(&a, &[1.0], &[0.5]).unwrap().as_slice(),
            &[0.0]
        );
    }

    #[test]
    fn gradient_requires_positive_image() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            kl_fidelity_grad(&a, &[1.0, 1.0], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn smoothness_constant_examples() {
        assert_eq!(
            kl_rel_smooth_constant(&DenseMatrix::identity(4)).unwrap(),
            1.0
        );
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(kl_rel_smooth_constant(&a).unwrap(), 6.0);
        let z = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            kl_rel_smooth_constant(&z),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = build_simplex_tv(6, 8, 21, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..20 {
            let x = random_simplex(&mut rng, 6);
            let g = p.f_grad(&x).unwrap();
            for j in 0..6 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (p.f_value(&xp).unwrap() - p.f_value(&xm).unwrap()) / (2.0 * h);
                assert!(
                    (fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()),
                    "{fd} vs {}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn full_gradient_is_sum_of_rows() {
        let p = build_simplex_tv(7, 9, 4, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_simplex(&mut rng, 7);
        let full = p.f_grad(&x).unwrap();
        let mut sum = vec![0.0; 7];
        for i in 0..9 {
            let gi = p.f_partial_grad(&[i], &x).unwrap();
            sum.iter_mut().zip(gi.iter()).for_each(|(s, v)| *s += v);
        }
        for (a, b) in full.iter().zip(&sum) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn descent_lemma_holds_with_column_sum_constant() {
        let p = build_simplex_tv(5, 6, 10, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = random_simplex(&mut rng, 5);
            let y = random_simplex(&mut rng, 5);
            let margin = p
                .descent_lemma_margin(p.primal_smoothness(), &x, &y)
                .unwrap();
            assert!(margin >= -1e-9 * (1.0 + p.f_value(&x).unwrap().abs()));
        }
    }

    #[test]
    fn lagrangian_is_fidelity_plus_coupling() {
        let p = build_simplex_tv(4, 5, 2, 0.3).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let mu = [0.3, -0.1, 0.2];
        let ax = p.a().matvec(&x).unwrap();
        let direct: f64 = ax
            .iter()
            .zip(p.b().iter())
            .map(|(u, v)| u * (u / v).ln() - u + v)
            .sum::<f64>()
            + (0.1 * 0.3 + 0.1 * -0.1 + 0.1 * 0.2);
        assert_relative_eq!(p.lagrangian(&x, &mu).unwrap(), direct, max_relative = 1e-13);
        assert!(matches!(
            p.lagrangian(&x, &[0.31, 0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            p.lagrangian(&[0.5, 0.5, 0.5, 0.0], &mu),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn builder_ranges_and_determinism() {
        let p = build_simplex_tv(30, 40, 5, 0.1).unwrap();
        assert!(p.a().data().iter().all(|v| (0.01..=1.01).contains(v)));
        assert!(p.b().iter().all(|v| *v > 0.0 && *v <= 1.0));
        assert_eq!(p, build_simplex_tv(30, 40, 5, 0.1).unwrap());
        assert_ne!(p, build_simplex_tv(30, 40, 6, 0.1).unwrap());
        assert!(build_simplex_tv(1, 4, 0, 0.1).is_err());
    }

    #[test]
    fn construction_rejects_bad_data() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(SimplexTvProblem::new(a, DenseVector::new(vec![1.0]).unwrap(), 0.1).is_err());
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(
            SimplexTvProblem::new(a.clone(), DenseVector::new(vec![0.0]).unwrap(), 0.1).is_err()
        );
        assert!(SimplexTvProblem::new(a, DenseVector::new(vec![1.0]).unwrap(), -1.0).is_err());
    }
}
