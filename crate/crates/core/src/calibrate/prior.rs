//! Priors on the parameter vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior `p(θ)` exposing log-density, gradient and Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Prior {
    /// Uniform on the box `[lower, upper]`.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// Independent normal components.
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
}

impl Prior {
    /// Uniform prior on `[-1, 1]^d`.
    pub fn default_uniform(d: usize) -> Self {
        Prior::Uniform { lower: vec![-1.0; d], upper: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::Uniform { lower, .. } => lower.len(),
            Prior::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Uniform { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return Err(Error::Config("uniform prior needs finite lower < upper".into()));
                }
            }
            Prior::Gaussian { mean, sd } => {
                if mean.len() != sd.len() {
                    return Err(Error::DimensionMismatch { expected: mean.len(), got: sd.len() });
                }
                if sd.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return Err(Error::Config("gaussian prior needs positive finite sd".into()));
                }
            }
        }
        Ok(())
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        match self {
            Prior::Uniform { lower, upper } => {
                theta.iter().zip(lower.iter().zip(upper)).all(|(t, (l, u))| *t >= *l && *t <= *u)
            }
            Prior::Gaussian { .. } => theta.iter().all(|t| t.is_finite()),
        }
    }

    /// `log p(θ)`; `-∞` outside the support.
    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        Ok(match self {
            Prior::Uniform { lower, upper } => {
                if self.contains(theta) {
                    -lower.iter().zip(upper).map(|(l, u)| (u - l).ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Gaussian { mean, sd } => theta
                .iter()
                .zip(mean.iter().zip(sd))
                .map(|(t, (m, s))| {
                    let z = (t - m) / s;
                    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                })
                .sum(),
        })
    }

    /// `log p(θ)` without the support restriction: a uniform prior gives its
    /// in-box constant everywhere.
    pub fn log_kernel(&self, theta: &[f64]) -> Result<f64> {
        match self {
            Prior::Uniform { lower, upper } => {
                self.check(theta)?;
                Ok(-lower.iter().zip(upper).map(|(l, u)| (u - l).ln()).sum::<f64>())
            }
            Prior::Gaussian { .. } => self.log_density(theta),
        }
    }

    /// `∇ log p(θ)`; zero inside a uniform box.
    pub fn gradient(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check(theta)?;
        Ok(match self {
            Prior::Uniform { .. } => DVector::zeros(theta.len()),
            Prior::Gaussian { mean, sd } => {
                DVector::from_iterator(theta.len(), theta.iter().zip(mean.iter().zip(sd)).map(|(t, (m, s))| -(t - m) / (s * s)))
            }
        })
    }

    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        Ok(match self {
            Prior::Uniform { .. } => DMatrix::zeros(theta.len(), theta.len()),
            Prior::Gaussian { sd, .. } => {
                DMatrix::from_diagonal(&DVector::from_iterator(sd.len(), sd.iter().map(|s| -1.0 / (s * s))))
            }
        })
    }
}
