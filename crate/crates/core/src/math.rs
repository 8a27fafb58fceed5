//! Small numerical helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `log(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// `log Σ e^{x_i}`; `-∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Running first and second moments of vectors.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    n: usize,
    sum: Vec<f64>,
    cross: Vec<f64>,
    dim: usize,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, sum: vec![0.0; dim], cross: vec![0.0; dim * dim], dim }
    }

    /// Adds one observation. Values are integers of moderate size, so raw
    /// sums stay exact in f64.
    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.n += 1;
        for i in 0..self.dim {
            self.sum[i] += x[i];
            for j in 0..self.dim {
                self.cross[i * self.dim + j] += x[i] * x[j];
            }
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.n += other.n;
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.cross.iter_mut().zip(&other.cross).for_each(|(a, b)| *a += b);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim, self.sum.iter().map(|s| s / self.n as f64))
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.n as f64;
        let mean = self.mean();
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            (self.cross[i * self.dim + j] - n * mean[i] * mean[j]) / (n - 1.0)
        })
    }
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Side length of a square matrix.
pub fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    Ok(m.nrows())
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_matches_reference_values() {
        // log(exp(0.5) + exp(2)) and log(exp(1234) + exp(1232))
        assert!((log_add_exp(0.5, 2.0) - 2.201413277982752).abs() < 1e-15);
        assert!((log_add_exp(1234.0, 1232.0) - 1234.126928011043).abs() < 1e-12);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((log_sum_exp(&[1.0, 2.0, 3.0]) - 3.40760596444438).abs() < 1e-13);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn moments_of_known_sample() {
        let mut acc = MomentAccumulator::new(2);
        for x in [[1.0, 2.0], [3.0, 2.0], [5.0, 8.0]] {
            acc.push(&x);
        }
        let m = acc.mean();
        assert_eq!((m[0], m[1]), (3.0, 4.0));
        let c = acc.covariance();
        assert!((c[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((c[(1, 1)] - 12.0).abs() < 1e-12);
        assert!((c[(0, 1)] - 6.0).abs() < 1e-12);
    }
}
