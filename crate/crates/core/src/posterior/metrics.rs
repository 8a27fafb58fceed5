//! Comparisons between approximate and reference posteriors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::GridPosterior;
use crate::error::{Error, Result};
use crate::math::{check_square, frobenius};

/// `KL(p ‖ q) = ∫ p log(p / q)` by the trapezoidal rule on a shared grid.
pub fn kl_divergence_grid(p: &GridPosterior, q: &GridPosterior) -> Result<f64> {
    if p.axes != q.axes {
        return Err(Error::GridMismatch("axes differ".into()));
    }
    let w = p.weights();
    let mut kl = 0.0;
    for (i, (lp, lq)) in p.log_density.iter().zip(&q.log_density).enumerate() {
        if *lp == f64::NEG_INFINITY {
            continue;
        }
        let pi = lp.exp();
        if pi * w[i] == 0.0 {
            continue;
        }
        if !lq.is_finite() {
            return Err(Error::SupportViolation(i));
        }
        kl += w[i] * pi * (lp - lq);
    }
    Ok(kl)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatios {
    /// `K_cl / K_true` when both are scalars.
    pub ratio: Option<f64>,
    /// `‖K_cl K_true⁻¹‖_F / √d`.
    pub frobenius_ratio: f64,
    /// `‖I − K_cl K_true⁻¹‖_F²`, which is `(1 − ratio)²` for scalars.
    pub squared_error: f64,
}

pub fn variance_ratio_metrics(k_cl: &DMatrix<f64>, k_true: &DMatrix<f64>) -> Result<VarianceRatios> {
    let d = check_square(k_true)?;
    if check_square(k_cl)? != d {
        return Err(Error::DimensionMismatch { expected: d, got: k_cl.nrows() });
    }
    let inv = k_true.clone().try_inverse().ok_or_else(|| Error::Singular("reference covariance".into()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("reference covariance".into()));
    }
    let r = k_cl * inv;
    Ok(VarianceRatios {
        ratio: (d == 1).then(|| r[(0, 0)]),
        frobenius_ratio: frobenius(&r) / (d as f64).sqrt(),
        squared_error: frobenius(&(DMatrix::identity(d, d) - r)).powi(2),
    })
}
