//! Dense vectors and matrix-free linear operators.
//!
//! Every operator in this crate (the coupling map of a saddle problem, a data
//! matrix, a finite-difference stencil, a blur) is a [`LinearMap`]: something
//! with a forward action, an adjoint action and a shape. Dense matrices are
//! stored row-major in one contiguous block and all reductions accumulate left
//! to right, so results are bit-reproducible across runs.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real coordinate vector with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Wraps `entries`, rejecting NaN and infinities.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry {} at index {i}",
                entries[i]
            )));
        }
        Ok(DenseVector(entries))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::new(entries.to_vec())
    }

    /// Crate-internal constructor for values produced by finite arithmetic.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        DenseVector(entries)
    }

    pub fn zeros(n: usize) -> Self {
        DenseVector(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        DenseVector(vec![value; n])
    }

    /// The barycenter `(1/n, ..., 1/n)` of the probability simplex.
    pub fn uniform_simplex(n: usize) -> Self {
        Self::constant(n, 1.0 / n as f64)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn norm1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn norm2(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &[f64]) -> DenseVector {
        assert_eq!(self.len(), other.len(), "sub: length mismatch");
        DenseVector::from_raw(self.0.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    /// `self + alpha * other`, elementwise.
    pub fn add_scaled(&self, alpha: f64, other: &[f64]) -> DenseVector {
        assert_eq!(self.len(), other.len(), "add_scaled: length mismatch");
        DenseVector::from_raw(
            self.0
                .iter()
                .zip(other)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        )
    }

    pub fn scaled(&self, alpha: f64) -> DenseVector {
        DenseVector::from_raw(self.0.iter().map(|a| alpha * a).collect())
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        DenseVector::new(v)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Vec<f64> {
        v.0
    }
}

/// Left-to-right inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Construction(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape("DenseMatrix::new", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Construction("matrix has non-finite entries".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Construction("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        DenseMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Sum over rows for each column.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, a) in sums.iter_mut().zip(self.row(i)) {
                *s += a;
            }
        }
        sums
    }

    /// Copy of the rows listed in `rows`, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            if r >= self.rows {
                return Err(Error::Parameter(format!("row index {r} out of range")));
            }
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix::new(rows.len(), self.cols, data)
    }

    /// `Ax`.
    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector> {
        if x.len() != self.cols {
            return Err(Error::shape("DenseMatrix::matvec", self.cols, x.len()));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        Ok(DenseVector::from_raw(out))
    }

    /// `A^t y`.
    pub fn matvec_t(&self, y: &[f64]) -> Result<DenseVector> {
        if y.len() != self.rows {
            return Err(Error::shape("DenseMatrix::matvec_t", self.rows, y.len()));
        }
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(y, &mut out);
        Ok(DenseVector::from_raw(out))
    }

    fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    fn matvec_t_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
    }
}

/// Zero-padded discrete convolution on a 1-D grid of `n` points whose columns
/// are rescaled to sum to one, so the operator maps the simplex into itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convolution {
    n: usize,
    kernel: Vec<f64>,
    column_scale: Vec<f64>,
}

impl Convolution {
    /// `kernel` has odd length `2r + 1` and is centered at index `r`.
    pub fn new(n: usize, kernel: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Construction(
                "convolution grid must be nonempty".into(),
            ));
        }
        if kernel.len().is_multiple_of(2) {
            return Err(Error::Construction(
                "convolution kernel length must be odd".into(),
            ));
        }
        if kernel.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Construction(
                "convolution kernel must be finite and nonnegative".into(),
            ));
        }
        let r = kernel.len() / 2;
        if kernel[r] <= 0.0 {
            return Err(Error::Construction(
                "kernel center weight must be positive".into(),
            ));
        }
        let column_scale = (0..n)
            .map(|j| {
                let lo = j.saturating_sub(r);
                let hi = (j + r).min(n - 1);
                let mass: f64 = (lo..=hi).map(|i| kernel[i + r - j]).sum();
                1.0 / mass
            })
            .collect();
        Ok(Convolution {
            n,
            kernel,
            column_scale,
        })
    }

    /// Smooth bump `exp(-1/(1 - t^2))` sampled at `t = s/(radius + 1)`, `s = -radius..=radius`.
    pub fn bump(n: usize, radius: usize) -> Result<Self> {
        let kernel = (-(radius as i64)..=radius as i64)
            .map(|s| {
                let t = s as f64 / (radius as f64 + 1.0);
                (-1.0 / (1.0 - t * t)).exp()
            })
            .collect();
        Self::new(n, kernel)
    }

    pub fn radius(&self) -> usize {
        self.kernel.len() / 2
    }

    #[allow(clippy::needless_range_loop)]
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let r = self.radius();
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.kernel[i + r - j] * self.column_scale[j] * x[j];
            }
            *o = acc;
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let r = self.radius();
        for (j, o) in out.iter_mut().enumerate() {
            let lo = j.saturating_sub(r);
            let hi = (j + r).min(self.n - 1);
            let mut acc = 0.0;
            for i in lo..=hi {
                acc += self.kernel[i + r - j] * y[i];
            }
            *o = self.column_scale[j] * acc;
        }
    }
}

/// A linear operator between finite-dimensional real spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LinearMap {
    Dense(DenseMatrix),
    /// `(Bx)_i = x_{i+1} - x_i`, mapping `R^n -> R^{n-1}`.
    ForwardDifference {
        n: usize,
    },
    Convolution(Convolution),
    /// Blocks sharing one input space; outputs are concatenated.
    Stack(Vec<LinearMap>),
    Zero {
        input_dim: usize,
        output_dim: usize,
    },
    Identity {
        n: usize,
    },
}

impl LinearMap {
    pub fn forward_difference(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Construction(format!(
                "forward difference needs n >= 2, got {n}"
            )));
        }
        Ok(LinearMap::ForwardDifference { n })
    }

    pub fn zero(input_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Construction(
                "zero map dimensions must be positive".into(),
            ));
        }
        Ok(LinearMap::Zero {
            input_dim,
            output_dim,
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Construction(
                "identity dimension must be positive".into(),
            ));
        }
        Ok(LinearMap::Identity { n })
    }

    pub fn stack(blocks: Vec<LinearMap>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Construction("empty operator stack".into()))?;
        let n = first.input_dim();
        if let Some(b) = blocks.iter().find(|b| b.input_dim() != n) {
            return Err(Error::shape("LinearMap::stack", n, b.input_dim()));
        }
        Ok(LinearMap::Stack(blocks))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            LinearMap::Dense(a) => a.cols(),
            LinearMap::ForwardDifference { n } => *n,
            LinearMap::Convolution(c) => c.n,
            LinearMap::Stack(blocks) => blocks[0].input_dim(),
            LinearMap::Zero { input_dim, .. } => *input_dim,
            LinearMap::Identity { n } => *n,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            LinearMap::Dense(a) => a.rows(),
            LinearMap::ForwardDifference { n } => n - 1,
            LinearMap::Convolution(c) => c.n,
            LinearMap::Stack(blocks) => blocks.iter().map(LinearMap::output_dim).sum(),
            LinearMap::Zero { output_dim, .. } => *output_dim,
            LinearMap::Identity { n } => *n,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LinearMap::Dense(_) => "dense-matrix",
            LinearMap::ForwardDifference { .. } => "forward-difference",
            LinearMap::Convolution(_) => "convolution",
            LinearMap::Stack(_) => "vertical-stack",
            LinearMap::Zero { .. } => "zero",
            LinearMap::Identity { .. } => "identity",
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<DenseVector> {
        let mut out = vec![0.0; self.output_dim()];
        self.apply_into(x, &mut out)?;
        Ok(DenseVector::from_raw(out))
    }

    pub fn adjoint_apply(&self, y: &[f64]) -> Result<DenseVector> {
        let mut out = vec![0.0; self.input_dim()];
        self.adjoint_apply_into(y, &mut out)?;
        Ok(DenseVector::from_raw(out))
    }

    /// Writes `op(x)` into `out` without allocating (except for stacks).
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("LinearMap::apply", self.input_dim(), x.len()));
        }
        if out.len() != self.output_dim() {
            return Err(Error::shape(
                "LinearMap::apply output",
                self.output_dim(),
                out.len(),
            ));
        }
        match self {
            LinearMap::Dense(a) => a.matvec_into(x, out),
            LinearMap::ForwardDifference { .. } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = x[i + 1] - x[i];
                }
            }
            LinearMap::Convolution(c) => c.apply_into(x, out),
            LinearMap::Stack(blocks) => {
                let mut offset = 0;
                for b in blocks {
                    let m = b.output_dim();
                    b.apply_into(x, &mut out[offset..offset + m])?;
                    offset += m;
                }
            }
            LinearMap::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            LinearMap::Identity { .. } => out.copy_from_slice(x),
        }
        Ok(())
    }

    /// Writes `op^T(y)` into `out`.
    pub fn adjoint_apply_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        if y.len() != self.output_dim() {
            return Err(Error::shape(
                "LinearMap::adjoint_apply",
                self.output_dim(),
                y.len(),
            ));
        }
        if out.len() != self.input_dim() {
            return Err(Error::shape(
                "LinearMap::adjoint_apply output",
                self.input_dim(),
                out.len(),
            ));
        }
        match self {
            LinearMap::Dense(a) => a.matvec_t_into(y, out),
            LinearMap::ForwardDifference { n } => {
                let n = *n;
                out[0] = -y[0];
                for j in 1..n - 1 {
                    out[j] = y[j - 1] - y[j];
                }
                out[n - 1] = y[n - 2];
            }
            LinearMap::Convolution(c) => c.adjoint_into(y, out),
            LinearMap::Stack(blocks) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut scratch = vec![0.0; out.len()];
                let mut offset = 0;
                for b in blocks {
                    let m = b.output_dim();
                    b.adjoint_apply_into(&y[offset..offset + m], &mut scratch)?;
                    for (o, s) in out.iter_mut().zip(&scratch) {
                        *o += s;
                    }
                    offset += m;
                }
            }
            LinearMap::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            LinearMap::Identity { .. } => out.copy_from_slice(y),
        }
        Ok(())
    }
}

/// Result of a power-iteration norm estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// `false` when `max_iter` was exhausted before the relative change fell below `tol`.
    pub converged: bool,
}

pub const NORM_TOL: f64 = 1e-9;
pub const NORM_MAX_ITER: usize = 10_000;
const NORM_START_SEED: u64 = 0x005e_ed0f_1ab0;

/// Spectral norm `||op||_2` by power iteration on `op^T op` from a fixed seeded
/// start vector. The estimate approaches the true norm from below.
pub fn operator_norm(op: &LinearMap, tol: f64, max_iter: usize) -> Result<NormEstimate> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Parameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = op.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(NORM_START_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|e| *e /= norm);

    let mut image = vec![0.0; op.output_dim()];
    let mut back = vec![0.0; n];
    let mut sigma = 0.0;
    for it in 1..=max_iter {
        op.apply_into(&v, &mut image)?;
        op.adjoint_apply_into(&image, &mut back)?;
        let lambda = dot(&back, &back).sqrt();
        if lambda == 0.0 {
            return Ok(NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        let next = lambda.sqrt();
        for (vi, bi) in v.iter_mut().zip(&back) {
            *vi = bi / lambda;
        }
        if it > 1 && (next - sigma).abs() <= tol * next {
            return Ok(NormEstimate {
                value: next,
                iterations: it,
                converged: true,
            });
        }
        sigma = next;
    }
    log::warn!(
        "operator_norm: {} did not converge in {max_iter} iterations, estimate {sigma}",
        op.kind()
    );
    Ok(NormEstimate {
        value: sigma,
        iterations: max_iter,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn all_kinds(rng: &mut impl Rng) -> Vec<LinearMap> {
        let dense = DenseMatrix::new(4, 5, random_vec(rng, 20)).unwrap();
        let fwd = LinearMap::forward_difference(5).unwrap();
        let conv = LinearMap::Convolution(Convolution::bump(5, 2).unwrap());
        vec![
            LinearMap::Dense(dense.clone()),
            fwd.clone(),
            conv.clone(),
            LinearMap::stack(vec![conv, fwd, LinearMap::Dense(dense)]).unwrap(),
            LinearMap::zero(5, 3).unwrap(),
            LinearMap::identity(5).unwrap(),
        ]
    }

    #[test]
    fn forward_difference_apply() {
        let b = LinearMap::forward_difference(3).unwrap();
        assert_eq!(b.apply(&[1.0, 2.0, 4.0]).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn forward_difference_adjoint() {
        let b = LinearMap::forward_difference(3).unwrap();
        assert_eq!(
            b.adjoint_apply(&[1.0, 1.0]).unwrap().as_slice(),
            &[-1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn zero_and_identity() {
        let z = LinearMap::zero(3, 2).unwrap();
        assert_eq!(z.apply(&[1.0, -2.0, 3.0]).unwrap().as_slice(), &[0.0, 0.0]);
        let id = LinearMap::identity(2).unwrap();
        assert_eq!(
            id.adjoint_apply(&[0.5, -7.0]).unwrap().as_slice(),
            &[0.5, -7.0]
        );
    }

    #[test]
    fn dense_rows_are_outputs() {
        let a =
            LinearMap::Dense(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        assert_eq!(a.apply(&[1.0, 1.0]).unwrap().as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn shape_errors() {
        let b = LinearMap::forward_difference(3).unwrap();
        assert!(matches!(b.apply(&[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!(matches!(
            b.adjoint_apply(&[1.0, 2.0, 3.0]),
            Err(Error::Shape { .. })
        ));
        assert!(LinearMap::forward_difference(1).is_err());
        assert!(LinearMap::stack(vec![
            LinearMap::identity(2).unwrap(),
            LinearMap::identity(3).unwrap()
        ])
        .is_err());
    }

    #[test]
    fn non_finite_vectors_rejected() {
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
        assert!(serde_json::from_str::<DenseVector>("[1.0, 2.0]").is_ok());
    }

    #[test]
    fn adjoint_consistency_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for op in all_kinds(&mut rng) {
            for _ in 0..100 {
                let x = random_vec(&mut rng, op.input_dim());
                let y = random_vec(&mut rng, op.output_dim());
                let lhs = op.apply(&x).unwrap().dot(&y);
                let rhs = dot(&x, &op.adjoint_apply(&y).unwrap());
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
                    "{}: {lhs} vs {rhs}",
                    op.kind()
                );
            }
        }
    }

    #[test]
    fn stack_adjoint_is_sum_of_block_adjoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = LinearMap::Convolution(Convolution::bump(5, 1).unwrap());
        let b = LinearMap::forward_difference(5).unwrap();
        let stack = LinearMap::stack(vec![f.clone(), b.clone()]).unwrap();
        let tau = random_vec(&mut rng, 5);
        let zeta = random_vec(&mut rng, 4);
        let joined = [tau.clone(), zeta.clone()].concat();
        let expected = f
            .adjoint_apply(&tau)
            .unwrap()
            .add_scaled(1.0, &b.adjoint_apply(&zeta).unwrap());
        let got = stack.adjoint_apply(&joined).unwrap();
        for (g, e) in got.iter().zip(expected.iter()) {
            assert_relative_eq!(g, e, epsilon = 1e-14);
        }
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for op in all_kinds(&mut rng) {
            for _ in 0..20 {
                let x = random_vec(&mut rng, op.input_dim());
                let y = random_vec(&mut rng, op.input_dim());
                let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
                let lhs = op.apply(&combo).unwrap();
                let rhs = op
                    .apply(&x)
                    .unwrap()
                    .scaled(a)
                    .add_scaled(b, &op.apply(&y).unwrap());
                for (l, r) in lhs.iter().zip(rhs.iter()) {
                    assert!((l - r).abs() <= 1e-12 * (1.0 + r.abs()));
                }
            }
        }
    }

    #[test]
    fn convolution_columns_sum_to_one() {
        let conv = Convolution::bump(30, 10).unwrap();
        let op = LinearMap::Convolution(conv);
        for j in 0..30 {
            let mut e = vec![0.0; 30];
            e[j] = 1.0;
            let col = op.apply(&e).unwrap();
            assert!((col.sum() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn norm_identity_and_diagonal() {
        let id = LinearMap::identity(7).unwrap();
        let est = operator_norm(&id, NORM_TOL, NORM_MAX_ITER).unwrap();
        assert!((est.value - 1.0).abs() <= NORM_TOL);
        assert!(est.converged);

        let d =
            LinearMap::Dense(DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap());
        let est = operator_norm(&d, NORM_TOL, NORM_MAX_ITER).unwrap();
        assert!((est.value - 4.0).abs() <= 4.0 * 10.0 * NORM_TOL);
    }

    #[test]
    fn norm_forward_difference_250() {
        let b = LinearMap::forward_difference(250).unwrap();
        let est = operator_norm(&b, NORM_TOL, NORM_MAX_ITER).unwrap();
        assert!(est.value > 1.99 && est.value < 2.0, "{}", est.value);
    }

    #[test]
    fn norm_of_zero_map() {
        let z = LinearMap::zero(4, 3).unwrap();
        assert_eq!(operator_norm(&z, NORM_TOL, 10).unwrap().value, 0.0);
        assert!(operator_norm(&z, 0.0, 10).is_err());
    }

    #[test]
    fn stack_norm_bounds() {
        let f = LinearMap::Convolution(Convolution::bump(40, 10).unwrap());
        let b = LinearMap::forward_difference(40).unwrap();
        let nf = operator_norm(&f, NORM_TOL, NORM_MAX_ITER).unwrap().value;
        let nb = operator_norm(&b, NORM_TOL, NORM_MAX_ITER).unwrap().value;
        let ns = operator_norm(
            &LinearMap::stack(vec![f, b]).unwrap(),
            NORM_TOL,
            NORM_MAX_ITER,
        )
        .unwrap()
        .value;
        assert!(ns >= nf.max(nb) * (1.0 - 1e-6));
        assert!(ns <= (nf * nf + nb * nb).sqrt() * (1.0 + 1e-9));
    }
}
