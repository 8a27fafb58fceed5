//! Random-walk Metropolis sampling of an arbitrary log-target.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{check_square, MomentAccumulator};

/// Smallest chain accepted by [`posterior_covariance`].
pub const MIN_CHAIN_LENGTH: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// States after burn-in.
    pub samples: Vec<Vec<f64>>,
    /// Fraction of accepted proposals over all iterations.
    pub acceptance_rate: f64,
    pub burn_in: usize,
    pub iterations: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut acc = MomentAccumulator::new(self.dim());
        self.samples.iter().for_each(|s| acc.push(s));
        acc.mean()
    }

    /// One row per retained state, preceded by a `#` line holding a JSON
    /// header.
    pub fn write_csv<W: Write>(&self, out: W, header: &serde_json::Value) -> Result<()> {
        let mut out = out;
        writeln!(out, "# {}", serde_json::to_string(header)?)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.dim()).map(|k| format!("theta{k}")))?;
        for s in &self.samples {
            w.write_record(s.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Proposal covariance `(2.4² / d) Σ` for a target with covariance `Σ`.
pub fn scaled_proposal(cov: &DMatrix<f64>) -> DMatrix<f64> {
    cov * (2.4 * 2.4 / cov.nrows() as f64)
}

/// Metropolis chain with Gaussian increments of covariance `proposal`.
/// The first `burn_in` states are discarded.
pub fn rwm_sample<F, R>(
    log_target: F,
    init: &[f64],
    iterations: usize,
    burn_in: usize,
    proposal: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Chain>
where
    F: Fn(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    let d = check_square(proposal)?;
    if d != init.len() {
        return Err(Error::DimensionMismatch { expected: init.len(), got: d });
    }
    if burn_in >= iterations {
        return Err(Error::Config(format!("burn-in {burn_in} must be below the iteration count {iterations}")));
    }
    let l = proposal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("proposal covariance is not positive definite".into()))?
        .l();
    let mut x = DVector::from_column_slice(init);
    let mut lp = log_target(init)?;
    if !lp.is_finite() {
        return Err(Error::Config(format!("log-target is not finite at the initial state {init:?}")));
    }
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(iterations - burn_in);
    for it in 0..iterations {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let cand = &x + &l * z;
        let lc = log_target(cand.as_slice())?;
        let u: f64 = rng.random();
        if lc.is_finite() && u.ln() < lc - lp {
            x = cand;
            lp = lc;
            accepted += 1;
        }
        if it >= burn_in {
            samples.push(x.as_slice().to_vec());
        }
    }
    if accepted == 0 {
        return Err(Error::ZeroAcceptance { iterations });
    }
    Ok(Chain { samples, acceptance_rate: accepted as f64 / iterations as f64, burn_in, iterations })
}

/// Unbiased sample covariance of the retained states.
pub fn posterior_covariance(chain: &Chain) -> Result<DMatrix<f64>> {
    if chain.len() < MIN_CHAIN_LENGTH {
        return Err(Error::TooFewDraws { min: MIN_CHAIN_LENGTH, got: chain.len() });
    }
    if chain.samples.iter().all(|s| s == &chain.samples[0]) {
        return Err(Error::DegenerateChain("all samples are identical".into()));
    }
    let mut acc = MomentAccumulator::new(chain.dim());
    chain.samples.iter().for_each(|s| acc.push(s));
    Ok(crate::math::symmetrize(&acc.covariance()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn std_normal(x: &[f64]) -> Result<f64> {
        Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }

    #[test]
    fn gaussian_target() {
        let prop = scaled_proposal(&DMatrix::identity(1, 1));
        let c = rwm_sample(std_normal, &[0.0], 50_000, 1000, &prop, &mut stream(1, &[])).unwrap();
        assert_eq!(c.len(), 49_000);
        assert!(c.acceptance_rate > 0.2 && c.acceptance_rate < 0.7);
        let v = posterior_covariance(&c).unwrap()[(0, 0)];
        assert!((v - 1.0).abs() < 0.1, "variance {v}");
        let again = rwm_sample(std_normal, &[0.0], 50_000, 1000, &prop, &mut stream(1, &[])).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn identity_target_covariance() {
        let prop = scaled_proposal(&DMatrix::identity(2, 2));
        let c = rwm_sample(std_normal, &[0.0, 0.0], 40_000, 2000, &prop, &mut stream(2, &[])).unwrap();
        let k = posterior_covariance(&c).unwrap();
        assert!((&k - DMatrix::identity(2, 2)).norm() < 0.15);
        assert_eq!(k, k.transpose());
    }

    #[test]
    fn failures() {
        let prop = DMatrix::identity(1, 1);
        let point_mass = |x: &[f64]| Ok(if x[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY });
        assert!(matches!(
            rwm_sample(point_mass, &[0.0], 200, 10, &prop, &mut stream(3, &[])),
            Err(Error::ZeroAcceptance { .. })
        ));
        let short = Chain { samples: vec![vec![0.0]; 50], acceptance_rate: 0.5, burn_in: 0, iterations: 50 };
        assert!(matches!(posterior_covariance(&short), Err(Error::TooFewDraws { .. })));
        let flat = Chain { samples: vec![vec![1.0]; 500], acceptance_rate: 0.5, burn_in: 0, iterations: 500 };
        assert!(matches!(posterior_covariance(&flat), Err(Error::DegenerateChain(_))));
    }
}
