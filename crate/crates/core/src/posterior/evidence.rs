//! Importance-sampling estimate of the evidence `p(y)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{exact_log_posterior_kernel, LogPartitionCache};
use crate::calibrate::Prior;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::math::{check_square, log_sum_exp};
use crate::model::ModelSpec;

/// Smallest accepted effective sample size.
pub const MIN_EFFECTIVE_SAMPLE_SIZE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_evidence: f64,
    /// Standard error of `log_evidence` by the delta method.
    pub log_standard_error: f64,
    pub effective_sample_size: f64,
    pub n_points: usize,
}

/// Draws from `N(mean, cov)` together with their log-densities.
pub fn gaussian_draws<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let d = check_square(cov)?;
    if d != mean.len() {
        return Err(Error::DimensionMismatch { expected: mean.len(), got: d });
    }
    let l = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("proposal covariance is not positive definite".into()))?
        .l();
    let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let m = DVector::from_column_slice(mean);
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            let x = &m + &l * &z;
            (x.as_slice().to_vec(), log_norm - 0.5 * z.norm_squared())
        })
        .collect())
}

/// `log (1/n) Σ_j π(θ_j) / g(θ_j)` with `θ_j ~ g = N(mean, cov)` and
/// `π = exp(log_target)` unnormalised.
pub fn importance_sampling_evidence<F, R>(
    log_target: F,
    mean: &[f64],
    cov: &DMatrix<f64>,
    n_points: usize,
    rng: &mut R,
) -> Result<EvidenceEstimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
    R: Rng + ?Sized,
{
    if n_points < 2 {
        return Err(Error::TooFewDraws { min: 2, got: n_points });
    }
    let draws = gaussian_draws(mean, cov, n_points, rng)?;
    let log_w: Vec<f64> = draws
        .par_iter()
        .map(|(x, lg)| Ok(log_target(x)? - lg))
        .collect::<Result<_>>()?;
    let n = n_points as f64;
    let lse = log_sum_exp(&log_w);
    let ess = (2.0 * lse - log_sum_exp(&log_w.iter().map(|v| 2.0 * v).collect::<Vec<_>>())).exp();
    if !(ess >= MIN_EFFECTIVE_SAMPLE_SIZE) {
        return Err(Error::LowEffectiveSampleSize { ess, min: MIN_EFFECTIVE_SAMPLE_SIZE });
    }
    let log_mean = lse - n.ln();
    // relative variance of the weights
    let rel_var = log_w.iter().map(|v| ((v - log_mean).exp() - 1.0).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(EvidenceEstimate {
        log_evidence: log_mean,
        log_standard_error: (rel_var / n).sqrt(),
        effective_sample_size: ess,
        n_points,
    })
}

/// Evidence of `y` under `model` and `prior` with exact likelihoods and a
/// Gaussian proposal.
#[allow(clippy::too_many_arguments)]
pub fn evidence_importance_sampling<R: Rng + ?Sized>(
    y: &Lattice,
    model: ModelSpec,
    prior: &Prior,
    mean: &[f64],
    cov: &DMatrix<f64>,
    n_points: usize,
    cache: Option<&LogPartitionCache>,
    rng: &mut R,
) -> Result<EvidenceEstimate> {
    importance_sampling_evidence(|t| exact_log_posterior_kernel(t, y, model, prior, cache), mean, cov, n_points, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn target(x: &[f64]) -> Result<f64> {
        // 3 × N(0.2, 0.3²) unnormalised
        Ok(3f64.ln() - 0.5 * ((x[0] - 0.2) / 0.3).powi(2) - (0.3 * (2.0 * std::f64::consts::PI).sqrt()).ln())
    }

    #[test]
    fn exact_proposal_has_no_variance() {
        let cov = DMatrix::from_element(1, 1, 0.09);
        let e = importance_sampling_evidence(target, &[0.2], &cov, 200, &mut stream(1, &[])).unwrap();
        assert!((e.log_evidence - 3f64.ln()).abs() < 1e-12);
        assert!(e.log_standard_error < 1e-10);
        assert!((e.effective_sample_size - 200.0).abs() < 1e-6);
    }

    #[test]
    fn reports_poor_proposals() {
        let cov = DMatrix::from_element(1, 1, 1e-4);
        let err = importance_sampling_evidence(target, &[3.0], &cov, 200, &mut stream(1, &[])).unwrap_err();
        assert!(matches!(err, Error::LowEffectiveSampleSize { .. }));
    }

    #[test]
    fn wide_proposal_is_consistent_and_deterministic() {
        let cov = DMatrix::from_element(1, 1, 0.25);
        let a = importance_sampling_evidence(target, &[0.1], &cov, 2000, &mut stream(2, &[])).unwrap();
        let b = importance_sampling_evidence(target, &[0.1], &cov, 2000, &mut stream(2, &[])).unwrap();
        assert_eq!(a, b);
        assert!((a.log_evidence - 3f64.ln()).abs() < 3.0 * a.log_standard_error);
    }
}
