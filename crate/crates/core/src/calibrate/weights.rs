//! Magnitude adjustment: a single tempering weight on every block so the
//! curvature of the composite posterior at its mode matches the full one.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::check_square;

/// Tempering weight `w` and the rule that produced it. Option 0 is the
/// scalar variance ratio; options 1 to 5 are the matrix summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeWeight {
    pub option: u8,
    pub value: f64,
}

pub const WEIGHT_OPTIONS: [u8; 5] = [1, 2, 3, 4, 5];

fn checked(option: u8, value: f64) -> Result<MagnitudeWeight> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::NonPositiveWeight { option, value });
    }
    Ok(MagnitudeWeight { option, value })
}

fn check_pair(k_full: &DMatrix<f64>, k_cl_sum: &DMatrix<f64>) -> Result<usize> {
    let d = check_square(k_full)?;
    if check_square(k_cl_sum)? != d {
        return Err(Error::DimensionMismatch { expected: d, got: k_cl_sum.nrows() });
    }
    Ok(d)
}

/// `w = Var(s(y)) / Σ_i Var(s(y_{A_i} | y_{-A_i}))` for a scalar parameter.
pub fn scalar_magnitude_weight(k_full: &DMatrix<f64>, k_cl_sum: &DMatrix<f64>) -> Result<MagnitudeWeight> {
    let d = check_pair(k_full, k_cl_sum)?;
    if d != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: d });
    }
    let denom = k_cl_sum[(0, 0)];
    if !(denom > 0.0) {
        return Err(Error::Degenerate(format!("block variance sum {denom}")));
    }
    checked(0, k_full[(0, 0)] / denom)
}

/// Weight option `1..=5` for `K = w Σ_i K_i` with `K = k_full`, `Σ_i K_i = k_cl_sum`:
///
/// 1. `(det K / det ΣK_i)^{1/d}`
/// 2. `tr(K (ΣK_i)^{-1}) / d`
/// 3. mean over components of `K_jj / (ΣK_i)_jj`
/// 4. `tr K / tr ΣK_i`
/// 5. `sqrt(tr K² / tr (ΣK_i)²)`
pub fn matrix_magnitude_weight(k_full: &DMatrix<f64>, k_cl_sum: &DMatrix<f64>, option: u8) -> Result<MagnitudeWeight> {
    let d = check_pair(k_full, k_cl_sum)?;
    let df = d as f64;
    let value = match option {
        1 => {
            let det_cl = k_cl_sum.determinant();
            if det_cl == 0.0 || !det_cl.is_finite() {
                return Err(Error::Singular("block covariance sum".into()));
            }
            let ratio = k_full.determinant() / det_cl;
            if !(ratio > 0.0) {
                return Err(Error::NonPositiveWeight { option, value: ratio });
            }
            ratio.powf(1.0 / df)
        }
        2 => {
            let inv = k_cl_sum.clone().try_inverse().ok_or_else(|| Error::Singular("block covariance sum".into()))?;
            (k_full * inv).trace() / df
        }
        3 => {
            let mut total = 0.0;
            for j in 0..d {
                let denom = k_cl_sum[(j, j)];
                if !(denom > 0.0) {
                    return Err(Error::Degenerate(format!("block variance sum {denom} for component {j}")));
                }
                total += k_full[(j, j)] / denom;
            }
            total / df
        }
        4 => k_full.trace() / k_cl_sum.trace(),
        5 => {
            let denom = (k_cl_sum * k_cl_sum).trace();
            if !(denom > 0.0) {
                return Err(Error::Singular("block covariance sum".into()));
            }
            ((k_full * k_full).trace() / denom).sqrt()
        }
        other => return Err(Error::UnknownWeightOption(other)),
    };
    checked(option, value)
}

/// All five matrix options, in order.
pub fn all_magnitude_weights(k_full: &DMatrix<f64>, k_cl_sum: &DMatrix<f64>) -> Result<Vec<MagnitudeWeight>> {
    WEIGHT_OPTIONS.iter().map(|&o| matrix_magnitude_weight(k_full, k_cl_sum, o)).collect()
}
