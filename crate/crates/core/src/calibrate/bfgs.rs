//! Quasi-Newton ascent driven by Monte Carlo gradient estimates.
//!
//! The inverse Hessian is seeded from the covariance estimate at the start
//! point and refined by BFGS updates. The line search uses only directional
//! derivatives, since function values are not available. The run stops once
//! the gradient norm falls below a multiple of its own standard error.
//! By default that norm is taken in the metric of the inverse negative
//! Hessian, which makes the rule invariant to linear reparameterisation;
//! the Euclidean norm is available as an option.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prior::Prior;
use crate::error::{Error, Result};

/// Norm used by the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingNorm {
    /// `‖g‖₂` against `‖se(g)‖₂`.
    Euclidean,
    /// `√(gᵀ(−H)⁻¹g)` against `√tr((−H)⁻¹ Cov ĝ)`.
    Hessian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsConfig {
    /// Exact draws per gradient evaluation.
    pub gradient_draws: usize,
    pub max_iter: usize,
    /// Stop when `‖g‖ < se_multiplier × se(‖g‖)`.
    pub se_multiplier: f64,
    pub stopping_norm: StoppingNorm,
    /// Gradient evaluations allowed per line search.
    pub max_line_search: usize,
    /// Largest step length in parameter space.
    pub max_step: f64,
    /// Use exact moments instead of draws (small lattices only).
    pub exact_moments: bool,
    /// Gradient-norm threshold in exact mode.
    pub exact_tolerance: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            gradient_draws: 100,
            max_iter: 200,
            se_multiplier: 2.0,
            stopping_norm: StoppingNorm::Hessian,
            max_line_search: 8,
            max_step: 0.5,
            exact_moments: false,
            exact_tolerance: 1e-6,
        }
    }
}

/// One gradient evaluation: `∇ log p`, the covariance of the estimator
/// (zero when exact) and the matching Hessian estimate.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub gradient: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
}

impl GradientEstimate {
    pub fn standard_errors(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentResult {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub threshold: f64,
}

/// Gradient norm and the threshold it is compared with.
fn stopping_statistic(e: &GradientEstimate, config: &BfgsConfig) -> (f64, f64) {
    let euclidean = e.gradient.norm();
    if config.exact_moments {
        return (euclidean, config.exact_tolerance);
    }
    if config.stopping_norm == StoppingNorm::Hessian {
        if let Some(c) = (-e.hessian.clone()).cholesky() {
            let stat = e.gradient.dot(&c.solve(&e.gradient)).max(0.0).sqrt();
            let se = c.solve(&e.covariance).trace().max(0.0).sqrt();
            return (stat, config.se_multiplier * se);
        }
    }
    (euclidean, config.se_multiplier * e.standard_errors().norm())
}

fn initial_inverse(h: &DMatrix<f64>) -> DMatrix<f64> {
    let d = h.nrows();
    (-h.clone()).cholesky().map(|c| c.inverse()).unwrap_or_else(|| {
        let scale = (-h.trace() / d as f64).max(1.0);
        DMatrix::identity(d, d) / scale
    })
}

/// Largest `t ≤ t_max` keeping `x + t p` inside the prior support.
fn support_limit(x: &DVector<f64>, p: &DVector<f64>, prior: &Prior, t_max: f64) -> f64 {
    match prior {
        Prior::Uniform { lower, upper } => {
            let mut t = t_max;
            for i in 0..x.len() {
                if p[i] > 0.0 {
                    t = t.min(0.99 * (upper[i] - x[i]) / p[i]);
                } else if p[i] < 0.0 {
                    t = t.min(0.99 * (lower[i] - x[i]) / p[i]);
                }
            }
            t.max(0.0)
        }
        Prior::Gaussian { .. } => t_max,
    }
}

/// Maximises a log-density given a gradient oracle `grad(θ, seed)`.
pub fn maximize<F, R>(mut grad: F, x0: &[f64], prior: &Prior, config: &BfgsConfig, rng: &mut R) -> Result<AscentResult>
where
    F: FnMut(&[f64], u64) -> Result<GradientEstimate>,
    R: Rng + ?Sized,
{
    let mut eval = |x: &DVector<f64>, rng: &mut R| -> Result<GradientEstimate> {
        let e = grad(x.as_slice(), rng.random())?;
        if e.gradient.iter().any(|v| !v.is_finite()) {
            return Err(Error::LineSearch(format!("non-finite gradient at {:?}", x.as_slice())));
        }
        Ok(e)
    };
    let mut x = DVector::from_column_slice(x0);
    let mut cur = eval(&x, rng)?;
    let mut evaluations = 1;
    let mut b = initial_inverse(&cur.hessian);
    for iter in 0..config.max_iter {
        let (stat, thr) = stopping_statistic(&cur, config);
        if stat < thr {
            return Ok(AscentResult { theta: x.as_slice().to_vec(), iterations: iter, evaluations, grad_norm: stat, threshold: thr });
        }
        let mut p = &b * &cur.gradient;
        let mut slope0 = cur.gradient.dot(&p);
        if !(slope0 > 0.0) {
            // lost positive definiteness to noise: restart from steepest ascent
            b = initial_inverse(&cur.hessian);
            p = &b * &cur.gradient;
            slope0 = cur.gradient.dot(&p);
        }
        let t_cap = support_limit(&x, &p, prior, config.max_step / p.norm().max(f64::MIN_POSITIVE));
        if t_cap <= 0.0 {
            return Err(Error::LineSearch(format!("no feasible step from {:?}", x.as_slice())));
        }
        let mut t = t_cap.min(1.0);
        let (mut lo, mut hi) = (0.0f64, None::<f64>);
        let mut best: Option<(f64, f64, GradientEstimate)> = None;
        for _ in 0..config.max_line_search.max(1) {
            let e = eval(&(&x + &p * t), rng)?;
            evaluations += 1;
            let slope = e.gradient.dot(&p);
            let score = slope.abs();
            let accept = score <= 0.9 * slope0;
            if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                best = Some((score, t, e));
            }
            if accept {
                break;
            }
            if slope > 0.0 {
                lo = t;
                match hi {
                    Some(h) => t = 0.5 * (lo + h),
                    None if t < t_cap => t = (2.0 * t).min(t_cap),
                    None => break,
                }
            } else {
                hi = Some(t);
                t = 0.5 * (lo + t);
            }
        }
        let (_, t, next) = best.expect("at least one line-search evaluation");
        let s = &p * t;
        let yv = &cur.gradient - &next.gradient;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let d = x.len();
            let rho = 1.0 / sy;
            let left = DMatrix::identity(d, d) - &s * yv.transpose() * rho;
            b = &left * &b * left.transpose() + &s * s.transpose() * rho;
        }
        x += s;
        cur = next;
    }
    let (grad_norm, threshold) = stopping_statistic(&cur, config);
    Err(Error::NoConvergence { iterations: config.max_iter, grad_norm, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    /// Gaussian log-density with noisy gradients.
    fn noisy_quadratic(mode: DVector<f64>, prec: DMatrix<f64>, noise: f64) -> impl FnMut(&[f64], u64) -> Result<GradientEstimate> {
        move |x, seed| {
            let mut r = stream(seed, &[]);
            let g = &prec * (&mode - DVector::from_column_slice(x));
            let n = DVector::from_fn(x.len(), |_, _| { let z: f64 = StandardNormal.sample(&mut r); noise * z });
            let d = x.len();
            Ok(GradientEstimate { gradient: g + n, covariance: DMatrix::identity(d, d) * noise * noise, hessian: -prec.clone() })
        }
    }

    #[test]
    fn finds_the_mode_of_a_quadratic() {
        let mode = DVector::from_vec(vec![0.3, -0.2]);
        let prec = DMatrix::from_row_slice(2, 2, &[400.0, 120.0, 120.0, 200.0]);
        let prior = Prior::default_uniform(2);
        let config = BfgsConfig { exact_moments: true, exact_tolerance: 1e-9, ..Default::default() };
        let res = maximize(noisy_quadratic(mode.clone(), prec.clone(), 0.0), &[0.0, 0.0], &prior, &config, &mut stream(1, &[])).unwrap();
        assert!((DVector::from_vec(res.theta) - &mode).norm() < 1e-9);

        for norm in [StoppingNorm::Hessian, StoppingNorm::Euclidean] {
            let config = BfgsConfig { stopping_norm: norm, ..Default::default() };
            let a = maximize(noisy_quadratic(mode.clone(), prec.clone(), 1.0), &[0.0, 0.0], &prior, &config, &mut stream(2, &[])).unwrap();
            let b = maximize(noisy_quadratic(mode.clone(), prec.clone(), 1.0), &[0.0, 0.0], &prior, &config, &mut stream(2, &[])).unwrap();
            assert_eq!(a, b);
            assert!((DVector::from_vec(a.theta) - &mode).norm() < 0.05);
            assert!(a.grad_norm < a.threshold);
        }
    }

    #[test]
    fn hessian_norm_controls_the_flat_direction() {
        // strongly correlated target: the flat direction has precision 2
        let mode = DVector::from_vec(vec![0.1, 0.2]);
        let prec = DMatrix::from_row_slice(2, 2, &[501.0, -499.0, -499.0, 501.0]);
        let prior = Prior::default_uniform(2);
        let flat = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        let mut worst = [0.0f64; 2];
        for (k, norm) in [StoppingNorm::Euclidean, StoppingNorm::Hessian].into_iter().enumerate() {
            let config = BfgsConfig { stopping_norm: norm, ..Default::default() };
            for seed in 0..20 {
                // gradient noise with covariance prec / 100, as for 100 draws
                let chol = prec.clone().cholesky().unwrap().l() / 10.0;
                let (m, p) = (mode.clone(), prec.clone());
                let grad = move |x: &[f64], s: u64| {
                    let mut r = stream(s, &[]);
                    let z = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut r));
                    Ok(GradientEstimate {
                        gradient: &p * (&m - DVector::from_column_slice(x)) + &chol * z,
                        covariance: &p / 100.0,
                        hessian: -p.clone(),
                    })
                };
                // start 0.8 posterior sd away along the flat direction
                let x0 = &mode + &flat * (0.8 / 2f64.sqrt());
                let a = maximize(grad, x0.as_slice(), &prior, &config, &mut stream(seed, &[])).unwrap();
                let err = (DVector::from_vec(a.theta) - &mode).dot(&flat).abs();
                worst[k] = worst[k].max(err * 2f64.sqrt());
            }
        }
        // errors in posterior standard deviations along the flat direction
        assert!(worst[1] < 0.5, "{worst:?}");
        assert!(worst[0] > worst[1]);
    }

    #[test]
    fn reports_non_convergence() {
        let prior = Prior::default_uniform(1);
        let config = BfgsConfig { max_iter: 3, exact_moments: true, exact_tolerance: 0.0, ..Default::default() };
        let grad = |_: &[f64], _: u64| {
            Ok(GradientEstimate {
                gradient: DVector::from_element(1, 1.0),
                covariance: DMatrix::zeros(1, 1),
                hessian: DMatrix::from_element(1, 1, -1.0),
            })
        };
        let err = maximize(grad, &[0.0], &prior, &config, &mut stream(1, &[])).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. } | Error::LineSearch(_)));
    }
}
