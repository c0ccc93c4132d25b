//! Entropies, Bregman divergences and the D-prox mappings used by the solver.
//!
//! Two entropies are supported: the Shannon-Boltzmann entropy
//! `K(x) = sum x_i log x_i` on the nonnegative orthant (with `0 log 0 = 0`) and
//! the Euclidean energy `1/2 ||x||^2`. Their divergences are
//!
//! ```text
//! D_K(x, y) = sum x_i log(x_i / y_i) - x_i + y_i
//! D_E(x, y) = 1/2 ||x - y||^2
//! ```
//!
//! Iterates living in the interior of the Shannon-Boltzmann domain are carried
//! as [`BregmanPoint`]s holding their logarithms, and the simplex prox works
//! entirely in the log domain so that no positivity floor is ever needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseVector};

/// Tolerance on `|sum - 1|` for simplex vectors received as input.
pub const SIMPLEX_INPUT_TOL: f64 = 1e-9;
/// Tolerance on `|sum - 1|` for simplex vectors produced by this crate.
pub const SIMPLEX_OUTPUT_TOL: f64 = 1e-12;

/// Convex function generating a Bregman divergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entropy {
    ShannonBoltzmann,
    EuclideanEnergy,
}

impl Entropy {
    pub fn in_domain(self, x: &[f64]) -> bool {
        match self {
            Entropy::ShannonBoltzmann => x.iter().all(|v| *v >= 0.0),
            Entropy::EuclideanEnergy => true,
        }
    }

    pub fn in_interior(self, x: &[f64]) -> bool {
        match self {
            Entropy::ShannonBoltzmann => x.iter().all(|v| *v > 0.0),
            Entropy::EuclideanEnergy => true,
        }
    }

    fn require_domain(self, x: &[f64], what: &str) -> Result<()> {
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{what} has a negative entry")))
        }
    }

    fn require_interior(self, x: &[f64], what: &str) -> Result<()> {
        if self.in_interior(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{what} lies on the boundary of the entropy domain"
            )))
        }
    }

    pub fn value(self, x: &[f64]) -> Result<f64> {
        self.require_domain(x, "argument")?;
        Ok(match self {
            Entropy::ShannonBoltzmann => x.iter().map(|&v| xlogx(v)).sum(),
            Entropy::EuclideanEnergy => 0.5 * dot(x, x),
        })
    }

    /// Gradient on the interior of the domain.
    pub fn gradient(self, x: &[f64]) -> Result<DenseVector> {
        self.require_interior(x, "argument")?;
        Ok(DenseVector::from_raw(match self {
            Entropy::ShannonBoltzmann => x.iter().map(|v| v.ln() + 1.0).collect(),
            Entropy::EuclideanEnergy => x.to_vec(),
        }))
    }

    /// `D(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>`.
    ///
    /// A second argument on the boundary of the domain is an error rather than `+inf`.
    pub fn divergence(self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::shape("Entropy::divergence", x.len(), y.len()));
        }
        self.require_domain(x, "first argument")?;
        self.require_interior(y, "second argument")?;
        Ok(match self {
            Entropy::ShannonBoltzmann => {
                x.iter().zip(y).map(|(&a, &b)| kl_term(a, b.ln(), b)).sum()
            }
            Entropy::EuclideanEnergy => half_sq_dist(x, y),
        })
    }

    /// Divergence against an interior point, using its stored logarithms when present.
    pub fn divergence_from(self, x: &[f64], y: &BregmanPoint) -> Result<f64> {
        match (self, y.log_coords()) {
            (Entropy::ShannonBoltzmann, Some(logs)) => {
                if x.len() != logs.len() {
                    return Err(Error::shape(
                        "Entropy::divergence_from",
                        logs.len(),
                        x.len(),
                    ));
                }
                self.require_domain(x, "first argument")?;
                Ok(x.iter()
                    .zip(logs.iter().zip(y.coords().iter()))
                    .map(|(&a, (&lb, &b))| kl_term(a, lb, b))
                    .sum())
            }
            _ => self.divergence(x, y.coords()),
        }
    }

    /// Residual of the three-point identity
    /// `D(x,z) = D(x,y) + D(y,z) + <grad phi(y) - grad phi(z), x - y>`.
    pub fn three_point_residual(self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
        let dxz = self.divergence(x, z)?;
        let dxy = self.divergence(x, y)?;
        let dyz = self.divergence(y, z)?;
        let gy = self.gradient(y)?;
        let gz = self.gradient(z)?;
        let cross: f64 = gy
            .iter()
            .zip(gz.iter())
            .zip(x.iter().zip(y))
            .map(|((a, b), (u, v))| (a - b) * (u - v))
            .sum();
        Ok((dxz - dxy - dyz - cross).abs())
    }
}

#[inline]
fn xlogx(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

/// One coordinate of `D_K`: `a log(a/b) - a + b` given `log b`.
#[inline]
fn kl_term(a: f64, log_b: f64, b: f64) -> f64 {
    if a == 0.0 {
        b
    } else {
        a * (a.ln() - log_b) - a + b
    }
}

fn half_sq_dist(x: &[f64], y: &[f64]) -> f64 {
    0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// `log sum exp(z_i)` with max-subtraction.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// An iterate, optionally carrying its coordinatewise logarithm.
///
/// When `log_coords` is present every coordinate is strictly positive and
/// `coords = exp(log_coords)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BregmanPoint {
    coords: DenseVector,
    log_coords: Option<DenseVector>,
}

impl BregmanPoint {
    /// A point with no log representation (Euclidean carriers).
    pub fn plain(coords: DenseVector) -> Self {
        BregmanPoint {
            coords,
            log_coords: None,
        }
    }

    /// A strictly positive point; fails on any nonpositive coordinate.
    pub fn positive(coords: DenseVector) -> Result<Self> {
        if let Some(i) = coords.iter().position(|v| *v <= 0.0) {
            return Err(Error::Domain(format!(
                "coordinate {i} is not strictly positive ({})",
                coords[i]
            )));
        }
        let logs = DenseVector::from_raw(coords.iter().map(|v| v.ln()).collect());
        Ok(BregmanPoint {
            coords,
            log_coords: Some(logs),
        })
    }

    pub fn from_logs(log_coords: DenseVector) -> Self {
        let coords = DenseVector::from_raw(log_coords.iter().map(|v| v.exp()).collect());
        BregmanPoint {
            coords,
            log_coords: Some(log_coords),
        }
    }

    /// A point carried in the representation `entropy` needs.
    pub fn for_entropy(entropy: Entropy, coords: DenseVector) -> Result<Self> {
        match entropy {
            Entropy::ShannonBoltzmann => Self::positive(coords),
            Entropy::EuclideanEnergy => Ok(Self::plain(coords)),
        }
    }

    pub fn uniform_simplex(n: usize) -> Self {
        Self::from_logs(DenseVector::constant(n, -(n as f64).ln()))
    }

    pub fn coords(&self) -> &DenseVector {
        &self.coords
    }

    pub fn log_coords(&self) -> Option<&DenseVector> {
        self.log_coords.as_ref()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn into_coords(self) -> DenseVector {
        self.coords
    }
}

fn check_simplex(x: &[f64], what: &str) -> Result<()> {
    if x.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain(format!("{what} has a negative entry")));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_INPUT_TOL {
        return Err(Error::Domain(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// Entropic D-prox of the simplex indicator:
/// `argmin_{u in simplex} <v, u> + (1/step) D_K(u, x)`, i.e.
/// `u_i = x_i exp(-step v_i) / sum_j x_j exp(-step v_j)`, computed in the log domain.
pub fn kl_prox_simplex(x: &BregmanPoint, v: &[f64], step: f64) -> Result<BregmanPoint> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!(
            "step must be positive, got {step}"
        )));
    }
    if v.len() != x.len() {
        return Err(Error::shape("kl_prox_simplex", x.len(), v.len()));
    }
    if let Some(i) = v.iter().position(|d| !d.is_finite()) {
        return Err(Error::Domain(format!("drift entry {i} is not finite")));
    }
    let owned;
    let logs = match x.log_coords() {
        Some(l) => l,
        None => {
            owned = BregmanPoint::positive(x.coords().clone())?;
            owned.log_coords().expect("positive point carries logs")
        }
    };
    check_simplex(x.coords(), "prox center")?;

    let mut z: Vec<f64> = logs.iter().zip(v).map(|(l, d)| l - step * d).collect();
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    z.iter_mut().for_each(|e| *e -= top);
    let shift = z.iter().map(|e| e.exp()).sum::<f64>().ln();
    z.iter_mut().for_each(|e| *e -= shift);
    Ok(BregmanPoint::from_logs(DenseVector::from_raw(z)))
}

/// Euclidean D-prox of the indicator of the `l_inf` ball of radius `radius`:
/// the componentwise clip of `mu - step * v` to `[-radius, radius]`.
pub fn linf_ball_prox(mu: &[f64], v: &[f64], step: f64, radius: f64) -> Result<DenseVector> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!(
            "step must be positive, got {step}"
        )));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::Parameter(format!(
            "ball radius must be nonnegative, got {radius}"
        )));
    }
    if mu.len() != v.len() {
        return Err(Error::shape("linf_ball_prox", mu.len(), v.len()));
    }
    let out: Vec<f64> = mu
        .iter()
        .zip(v)
        .map(|(m, d)| (m - step * d).clamp(-radius, radius))
        .collect();
    DenseVector::new(out)
}

/// Pinsker slack `D_K(x, y) - 1/2 ||x - y||_1^2` for two simplex vectors.
pub fn pinsker_slack(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("pinsker_slack", x.len(), y.len()));
    }
    check_simplex(x, "x")?;
    check_simplex(y, "y")?;
    let kl = Entropy::ShannonBoltzmann.divergence(x, y)?;
    let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    Ok(kl - 0.5 * l1 * l1)
}
