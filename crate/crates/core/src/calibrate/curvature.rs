//! Curvature adjustment: a linear reparameterisation matching the full
//! Hessian at the mode, correlations included.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{check_square, frobenius, symmetrize};

/// Largest accepted relative residual of `WᵀH_cl W = H`.
pub const CURVATURE_TOLERANCE: f64 = 1e-6;

/// `W` with `Wᵀ H_cl W = H_full`.
///
/// Built as `W = M^{-T} Lᵀ` from the Cholesky factors `-H_full = LLᵀ` and
/// `-H_cl = MMᵀ`, which makes `W` upper triangular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureMatrix {
    pub w: DMatrix<f64>,
    /// `‖WᵀH_cl W − H_full‖_F / ‖H_full‖_F`.
    pub residual: f64,
}

fn cholesky_of_negated(h: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let neg = -symmetrize(h);
    neg.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotNegativeDefinite(format!("{what} Hessian; increase the covariance draws")))
}

pub fn curvature_matrix(h_full: &DMatrix<f64>, h_cl: &DMatrix<f64>) -> Result<CurvatureMatrix> {
    let d = check_square(h_full)?;
    if check_square(h_cl)? != d {
        return Err(Error::DimensionMismatch { expected: d, got: h_cl.nrows() });
    }
    let l = cholesky_of_negated(h_full, "full")?;
    let m = cholesky_of_negated(h_cl, "composite")?;
    let w = m
        .transpose()
        .solve_upper_triangular(&l.transpose())
        .ok_or_else(|| Error::Singular("composite Hessian factor".into()))?;
    let residual = curvature_residual(&w, h_full, h_cl);
    if !(residual < CURVATURE_TOLERANCE) {
        return Err(Error::Singular(format!("curvature identity residual {residual:.3e}")));
    }
    Ok(CurvatureMatrix { w, residual })
}

/// Relative Frobenius residual of `WᵀH_cl W = H_full`.
pub fn curvature_residual(w: &DMatrix<f64>, h_full: &DMatrix<f64>, h_cl: &DMatrix<f64>) -> f64 {
    frobenius(&(w.transpose() * h_cl * w - h_full)) / frobenius(h_full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_scalar_cases() {
        let h = DMatrix::from_row_slice(2, 2, &[-3.0, 0.5, 0.5, -1.0]);
        let c = curvature_matrix(&h, &h).unwrap();
        assert!((c.w - DMatrix::identity(2, 2)).norm() < 1e-14);
        let c = curvature_matrix(&DMatrix::from_element(1, 1, -2.0), &DMatrix::from_element(1, 1, -8.0)).unwrap();
        assert!((c.w[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_input() {
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.5]);
        let good = -DMatrix::identity(2, 2);
        assert!(matches!(curvature_matrix(&bad, &good), Err(Error::NotNegativeDefinite(_))));
        assert!(matches!(curvature_matrix(&good, &bad), Err(Error::NotNegativeDefinite(_))));
    }

    proptest! {
        #[test]
        fn identity_holds(a in -3.0f64..3.0, b in 0.1f64..3.0, c in 0.1f64..3.0, e in -3.0f64..3.0, f in 0.1f64..3.0, g in 0.1f64..3.0) {
            let l = DMatrix::from_row_slice(2, 2, &[b, 0.0, a, c]);
            let m = DMatrix::from_row_slice(2, 2, &[f, 0.0, e, g]);
            let h = -(&l * l.transpose());
            let hc = -(&m * m.transpose());
            let cm = curvature_matrix(&h, &hc).unwrap();
            prop_assert!(cm.residual < 1e-10);
            prop_assert!(cm.w[(1, 0)] == 0.0);
        }
    }
}
