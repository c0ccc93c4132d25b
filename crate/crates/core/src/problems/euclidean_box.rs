//! Bilinear saddle problem `<Tx, mu>` over two boxes with Euclidean geometry.
//!
//! With `f = h* = 0` and both entropies Euclidean, one step is the classical
//! primal-dual update `x+ = clip(x - lambda T^t mu)`, `mu+ = clip(mu + nu T(2x+ - x))`.

use crate::bregman::{BregmanPoint, Entropy};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, LinearMap};
use crate::solver::{Iterate, SaddleProblem};

use super::check_ball;

#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanBoxProblem {
    coupling: LinearMap,
    primal_radius: f64,
    dual_radius: f64,
    start: (DenseVector, DenseVector),
}

impl EuclideanBoxProblem {
    pub fn new(
        t: DenseMatrix,
        primal_radius: f64,
        dual_radius: f64,
        x0: Vec<f64>,
        mu0: Vec<f64>,
    ) -> Result<Self> {
        if !(primal_radius >= 0.0 && dual_radius >= 0.0) {
            return Err(Error::Parameter("box radii must be nonnegative".into()));
        }
        if x0.len() != t.cols() {
            return Err(Error::shape("EuclideanBoxProblem::new", t.cols(), x0.len()));
        }
        if mu0.len() != t.rows() {
            return Err(Error::shape(
                "EuclideanBoxProblem::new",
                t.rows(),
                mu0.len(),
            ));
        }
        let x0 = DenseVector::new(x0)?;
        let mu0 = DenseVector::new(mu0)?;
        check_ball(&x0, primal_radius)?;
        check_ball(&mu0, dual_radius)?;
        Ok(EuclideanBoxProblem {
            coupling: LinearMap::Dense(t),
            primal_radius,
            dual_radius,
            start: (x0, mu0),
        })
    }
}

fn clipped_step(p: &[f64], v: &[f64], step: f64, radius: f64) -> Result<BregmanPoint> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!(
            "step must be positive, got {step}"
        )));
    }
    if p.len() != v.len() {
        return Err(Error::shape("clipped_step", p.len(), v.len()));
    }
    let out = p
        .iter()
        .zip(v)
        .map(|(a, d)| (a - step * d).clamp(-radius, radius))
        .collect();
    Ok(BregmanPoint::plain(DenseVector::new(out)?))
}

impl SaddleProblem for EuclideanBoxProblem {
    fn primal_dim(&self) -> usize {
        self.coupling.input_dim()
    }

    fn dual_dim(&self) -> usize {
        self.coupling.output_dim()
    }

    fn coupling(&self) -> &LinearMap {
        &self.coupling
    }

    fn primal_entropy(&self) -> Entropy {
        Entropy::EuclideanEnergy
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
        clipped_step(x.coords(), drift, step, self.primal_radius)
    }

    fn dual_prox(&self, mu: &BregmanPoint, drift: &[f64], step: f64) -> Result<BregmanPoint> {
        clipped_step(mu.coords(), drift, step, self.dual_radius)
    }

    fn check_primal(&self, x: &[f64]) -> Result<()> {
        check_ball(x, self.primal_radius)
    }

    fn check_dual(&self, mu: &[f64]) -> Result<()> {
        check_ball(mu, self.dual_radius)
    }

    fn initial_point(&self) -> Iterate {
        Iterate {
            x: BregmanPoint::plain(self.start.0.clone()),
            mu: BregmanPoint::plain(self.start.1.clone()),
        }
    }
}
