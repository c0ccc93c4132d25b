//! Exact and batch-sampled gradient oracles for finite-sum smooth terms.
//!
//! A smooth term `f = sum_{i<m} f_i` is queried through two callbacks: the full
//! gradient and the sum of the gradients over an index set. Batches are drawn
//! uniformly without replacement from a counter-based generator keyed by
//! `(seed, k)`, so batch `k` can be regenerated without replaying the stream.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;

/// How the gradient of a finite sum is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// The full gradient.
    Exact,
    /// `sum_{i in B} grad f_i`, which drops the complement of the batch (biased).
    PaperPartial,
    /// `(m/q) sum_{i in B} grad f_i`, unbiased for uniform batches.
    ScaledUnbiased,
}

impl OracleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleMode::Exact => "exact",
            OracleMode::PaperPartial => "paper-partial",
            OracleMode::ScaledUnbiased => "scaled-unbiased",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientOracle {
    mode: OracleMode,
    batch_size: usize,
    summands: usize,
    seed: u64,
}

impl GradientOracle {
    pub fn new(mode: OracleMode, batch_size: usize, summands: usize, seed: u64) -> Result<Self> {
        if summands == 0 {
            return Err(Error::Parameter("oracle needs at least one summand".into()));
        }
        if batch_size == 0 || batch_size > summands {
            return Err(Error::Parameter(format!(
                "batch size {batch_size} outside [1, {summands}]"
            )));
        }
        Ok(GradientOracle {
            mode,
            batch_size,
            summands,
            seed,
        })
    }

    pub fn exact(summands: usize) -> Self {
        GradientOracle {
            mode: OracleMode::Exact,
            batch_size: summands.max(1),
            summands: summands.max(1),
            seed: 0,
        }
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn summands(&self) -> usize {
        self.summands
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// True when every estimate equals the full gradient.
    pub fn is_exact(&self) -> bool {
        self.mode == OracleMode::Exact || self.batch_size == self.summands
    }

    /// The batch used at iteration `k`, in increasing order.
    pub fn sample_batch(&self, k: u64) -> Vec<usize> {
        if self.batch_size == self.summands {
            return (0..self.summands).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        let mut batch = index::sample(&mut rng, self.summands, self.batch_size).into_vec();
        batch.sort_unstable();
        batch
    }

    /// Gradient estimate at iteration `k`.
    ///
    /// `partial(batch, x)` must return `sum_{i in batch} grad f_i(x)`.
    pub fn estimate<F, P>(&self, k: u64, x: &[f64], full: F, partial: P) -> Result<DenseVector>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>>,
        P: Fn(&[usize], &[f64]) -> Result<Vec<f64>>,
    {
        if self.is_exact() {
            return checked(k, full(x)?).map(DenseVector::from_raw);
        }
        let batch = self.sample_batch(k);
        let mut g = partial(&batch, x)?;
        if !all_finite(&g) {
            let index = batch
                .iter()
                .copied()
                .find(|&i| partial(&[i], x).map_or(true, |gi| !all_finite(&gi)));
            return Err(Error::Oracle {
                iteration: k,
                index,
            });
        }
        if self.mode == OracleMode::ScaledUnbiased {
            let scale = self.summands as f64 / self.batch_size as f64;
            g.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(DenseVector::from_raw(g))
    }

    /// Estimate together with its error `estimate - grad f(x)`.
    pub fn estimate_with_error<F, P>(
        &self,
        k: u64,
        x: &[f64],
        full: F,
        partial: P,
    ) -> Result<(DenseVector, DenseVector)>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>>,
        P: Fn(&[usize], &[f64]) -> Result<Vec<f64>>,
    {
        if self.is_exact() {
            let g = self.estimate(k, x, &full, &partial)?;
            let n = g.len();
            return Ok((g, DenseVector::zeros(n)));
        }
        let g = self.estimate(k, x, &full, &partial)?;
        let exact = checked(k, full(x)?)?;
        let err = g.sub(&exact);
        Ok((g, err))
    }
}

fn checked(k: u64, g: Vec<f64>) -> Result<Vec<f64>> {
    if all_finite(&g) {
        Ok(g)
    } else {
        Err(Error::Oracle {
            iteration: k,
            index: None,
        })
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|e| e.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `f_i(x) = c_i . x` with gradients the rows of `c`.
    #[allow(clippy::type_complexity)]
    fn linear_sum(
        c: &[Vec<f64>],
    ) -> (
        impl Fn(&[f64]) -> Result<Vec<f64>> + '_,
        impl Fn(&[usize], &[f64]) -> Result<Vec<f64>> + '_,
    ) {
        let n = c[0].len();
        let partial = move |batch: &[usize], _x: &[f64]| {
            let mut g = vec![0.0; n];
            for &i in batch {
                for (gj, cj) in g.iter_mut().zip(&c[i]) {
                    *gj += cj;
                }
            }
            Ok(g)
        };
        let full = move |x: &[f64]| {
            let all: Vec<usize> = (0..c.len()).collect();
            partial(&all, x)
        };
        (full, partial)
    }

    #[test]
    fn batch_size_validated() {
        assert!(matches!(
            GradientOracle::new(OracleMode::PaperPartial, 0, 4, 1),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            GradientOracle::new(OracleMode::PaperPartial, 5, 4, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn full_batch_is_all_indices() {
        let o = GradientOracle::new(OracleMode::PaperPartial, 6, 6, 3).unwrap();
        assert_eq!(o.sample_batch(17), vec![0, 1, 2, 3, 4, 5]);
        assert!(o.is_exact());
    }

    #[test]
    fn batches_are_reproducible_and_distinct() {
        let o = GradientOracle::new(OracleMode::PaperPartial, 3, 10, 99).unwrap();
        for k in 0..50 {
            let b = o.sample_batch(k);
            assert_eq!(b, o.sample_batch(k));
            assert_eq!(b.len(), 3);
            assert!(b.windows(2).all(|w| w[0] < w[1]));
            assert!(b.iter().all(|&i| i < 10));
        }
        assert_ne!(o.sample_batch(0), o.sample_batch(1));
    }

    #[test]
    fn inclusion_frequencies_are_uniform() {
        let o = GradientOracle::new(OracleMode::PaperPartial, 3, 10, 2024).unwrap();
        let draws = 100_000u64;
        let mut counts = [0u64; 10];
        for k in 0..draws {
            for i in o.sample_batch(k) {
                counts[i] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.3).abs() <= 0.01, "{freq}");
        }
    }

    #[test]
    fn full_batch_has_zero_error_in_every_mode() {
        let c = vec![vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.25, 4.0]];
        let (full, partial) = linear_sum(&c);
        for mode in [
            OracleMode::Exact,
            OracleMode::PaperPartial,
            OracleMode::ScaledUnbiased,
        ] {
            let o = GradientOracle::new(mode, 3, 3, 5).unwrap();
            let (g, err) = o
                .estimate_with_error(4, &[0.3, 0.7], &full, &partial)
                .unwrap();
            assert_eq!(g.as_slice(), &[-1.75, 6.5]);
            assert!(err.iter().all(|e| *e == 0.0));
        }
    }

    #[test]
    fn partial_mode_error_is_minus_complement() {
        let c = vec![
            vec![1.0, 2.0, 0.0],
            vec![-3.0, 0.5, 1.0],
            vec![0.25, 4.0, -1.0],
            vec![2.0, 2.0, 2.0],
        ];
        let (full, partial) = linear_sum(&c);
        let o = GradientOracle::new(OracleMode::PaperPartial, 2, 4, 8).unwrap();
        for k in 0..10 {
            let batch = o.sample_batch(k);
            let complement: Vec<usize> = (0..4).filter(|i| !batch.contains(i)).collect();
            let (_, err) = o
                .estimate_with_error(k, &[0.2; 3], &full, &partial)
                .unwrap();
            let missing = partial(&complement, &[0.2; 3]).unwrap();
            for (e, m) in err.iter().zip(missing.iter()) {
                assert_relative_eq!(*e, -m, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn scaled_mode_is_unbiased_over_all_batches() {
        let c = vec![
            vec![1.0, 2.0, 0.0],
            vec![-3.0, 0.5, 1.0],
            vec![0.25, 4.0, -1.0],
            vec![2.0, 2.0, 2.0],
        ];
        let (full, partial) = linear_sum(&c);
        let x = [0.2, 0.3, 0.5];
        let exact = full(&x).unwrap();
        let mut mean = [0.0; 3];
        let mut batches = 0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let g = partial(&[i, j], &x).unwrap();
                for (mj, gj) in mean.iter_mut().zip(g.iter()) {
                    *mj += 2.0 * gj;
                }
                batches += 1;
            }
        }
        assert_eq!(batches, 6);
        for (mj, ej) in mean.iter().zip(exact.iter()) {
            assert_relative_eq!(mj / 6.0, *ej, epsilon = 1e-14);
        }
    }

    #[test]
    fn non_finite_partial_reports_index() {
        let partial = |batch: &[usize], _x: &[f64]| {
            let v = if batch.contains(&2) { f64::NAN } else { 1.0 };
            Ok(vec![v])
        };
        let full = |x: &[f64]| partial(&[0, 1, 2, 3], x);
        let o = GradientOracle::new(OracleMode::PaperPartial, 4, 4, 0).unwrap();
        assert!(matches!(
            o.estimate(11, &[0.0], full, partial),
            Err(Error::Oracle {
                iteration: 11,
                index: None
            })
        ));
        let o = GradientOracle::new(OracleMode::PaperPartial, 3, 4, 0).unwrap();
        let k = (0..).find(|k| o.sample_batch(*k).contains(&2)).unwrap();
        assert!(matches!(
            o.estimate(k, &[0.0], full, partial),
            Err(Error::Oracle { index: Some(2), .. })
        ));
    }
}
