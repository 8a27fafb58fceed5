//! Gradient and Hessian identities, MAP estimation and the mean, magnitude
//! and curvature adjustments of the composite posterior.

mod bfgs;
mod curvature;
mod moments;
mod prior;
mod weights;

pub use bfgs::{maximize, AscentResult, BfgsConfig, GradientEstimate, StoppingNorm};
pub use curvature::{curvature_matrix, curvature_residual, CurvatureMatrix, CURVATURE_TOLERANCE};
pub use moments::{
    exact_block_moments, exact_full_moments, mc_block_moments, mc_full_moments, sampler_moments, BlockMoments,
    MomentEstimates,
};
pub use prior::Prior;
pub use weights::{all_magnitude_weights, matrix_magnitude_weight, scalar_magnitude_weight, MagnitudeWeight, WEIGHT_OPTIONS};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::composite::{BlockSet, CompositeLikelihood};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::model::{sufficient_statistics, ModelSpec};
use crate::rng::{label, stream};

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `∇ log p(θ | y) = s(y) − E s(y) + ∇ log p(θ)`, with `moments` taken at `θ`.
pub fn grad_log_posterior(
    theta: &[f64],
    y: &Lattice,
    model: ModelSpec,
    moments: &MomentEstimates,
    prior: &Prior,
) -> Result<DVector<f64>> {
    model.check_params(theta)?;
    check_dim(model.dim(), moments.dim())?;
    let s = DVector::from_vec(sufficient_statistics(y, model).as_f64());
    Ok(s - &moments.mean + prior.gradient(theta)?)
}

/// `H log p(θ | y) = −K(s(y)) + H log p(θ)`.
pub fn hessian_log_posterior(theta: &[f64], moments: &MomentEstimates, prior: &Prior) -> Result<DMatrix<f64>> {
    check_dim(theta.len(), moments.dim())?;
    Ok(-&moments.covariance + prior.hessian(theta)?)
}

/// `Σ_i [s(y_{A_i} | y_{-A_i}) − E s(y_{A_i} | y_{-A_i})] + ∇ log p(θ)`.
pub fn grad_log_cl_posterior(
    theta: &[f64],
    cl: &CompositeLikelihood,
    moments: &BlockMoments,
    prior: &Prior,
) -> Result<DVector<f64>> {
    cl.model().check_params(theta)?;
    check_dim(cl.blocks().len(), moments.blocks.len())?;
    check_dim(cl.model().dim(), moments.dim())?;
    let s = DVector::from_vec(cl.observed_stats_sum());
    Ok(s - moments.sum_mean() + prior.gradient(theta)?)
}

/// `−Σ_i K(s(y_{A_i} | y_{-A_i})) + H log p(θ)`.
pub fn hessian_log_cl_posterior(theta: &[f64], moments: &BlockMoments, prior: &Prior) -> Result<DMatrix<f64>> {
    check_dim(theta.len(), moments.dim())?;
    Ok(-moments.sum_covariance() + prior.hessian(theta)?)
}

fn full_gradient(
    y: &Lattice,
    model: ModelSpec,
    prior: &Prior,
    config: &BfgsConfig,
    theta: &[f64],
    seed: u64,
) -> Result<GradientEstimate> {
    let moments = if config.exact_moments {
        exact_full_moments(theta, model, y.rows(), y.cols())?
    } else {
        mc_full_moments(theta, model, y.rows(), y.cols(), config.gradient_draws, &mut stream(seed, &[]))?
    };
    Ok(GradientEstimate {
        gradient: grad_log_posterior(theta, y, model, &moments, prior)?,
        covariance: moments.mean_estimator_covariance(),
        hessian: hessian_log_posterior(theta, &moments, prior)?,
    })
}

fn cl_gradient(cl: &CompositeLikelihood, prior: &Prior, config: &BfgsConfig, theta: &[f64], seed: u64) -> Result<GradientEstimate> {
    let moments = if config.exact_moments {
        exact_block_moments(cl, theta)?
    } else {
        mc_block_moments(cl, theta, config.gradient_draws, &mut stream(seed, &[]))?
    };
    Ok(GradientEstimate {
        gradient: grad_log_cl_posterior(theta, cl, &moments, prior)?,
        covariance: moments.sum_mean_estimator_covariance(),
        hessian: hessian_log_cl_posterior(theta, &moments, prior)?,
    })
}

/// Estimated modes of the composite and the full posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEstimates {
    pub theta_cl: Vec<f64>,
    pub theta: Vec<f64>,
    pub iterations_cl: usize,
    pub iterations: usize,
    pub evaluations_cl: usize,
    pub evaluations: usize,
    pub grad_norm_cl: f64,
    pub grad_norm: f64,
    pub threshold_cl: f64,
    pub threshold: f64,
}

/// Mode of the composite posterior, ascending from `θ = 0`.
pub fn cl_map<R: Rng + ?Sized>(cl: &CompositeLikelihood, prior: &Prior, config: &BfgsConfig, rng: &mut R) -> Result<AscentResult> {
    let x0 = vec![0.0; cl.model().dim()];
    maximize(|t, seed| cl_gradient(cl, prior, config, t, seed), &x0, prior, config, rng)
}

/// Mode of the full posterior, ascending from `x0`.
pub fn full_map<R: Rng + ?Sized>(
    y: &Lattice,
    model: ModelSpec,
    prior: &Prior,
    config: &BfgsConfig,
    x0: &[f64],
    rng: &mut R,
) -> Result<AscentResult> {
    maximize(|t, seed| full_gradient(y, model, prior, config, t, seed), x0, prior, config, rng)
}

/// Two-stage MAP estimation: first the composite posterior from `θ = 0`,
/// then the full posterior starting from the composite mode.
pub fn bfgs_map<R: Rng + ?Sized>(
    y: &Lattice,
    model: ModelSpec,
    blocks: &BlockSet,
    prior: &Prior,
    config: &BfgsConfig,
    rng: &mut R,
) -> Result<MapEstimates> {
    prior.validate()?;
    check_dim(model.dim(), prior.dim())?;
    let cl = CompositeLikelihood::new(y, model, blocks.clone())?;
    let (seed_cl, seed_full): (u64, u64) = (rng.random(), rng.random());
    let a = cl_map(&cl, prior, config, &mut stream(seed_cl, &[]))?;
    let b = full_map(y, model, prior, config, &a.theta, &mut stream(seed_full, &[]))?;
    Ok(MapEstimates {
        theta_cl: a.theta,
        theta: b.theta,
        iterations_cl: a.iterations,
        iterations: b.iterations,
        evaluations_cl: a.evaluations,
        evaluations: b.evaluations,
        grad_norm_cl: a.grad_norm,
        grad_norm: b.grad_norm,
        threshold_cl: a.threshold,
        threshold: b.threshold,
    })
}

/// `w log f_CL(y | θ) + log p(θ)`.
pub fn log_cl_posterior(theta: &[f64], cl: &CompositeLikelihood, prior: &Prior, weight: f64) -> Result<f64> {
    let lp = prior.log_density(theta)?;
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(cl.log_likelihood(theta, weight)? + lp)
}

fn shifted(theta: &[f64], maps: &MapEstimates) -> Vec<f64> {
    theta.iter().zip(&maps.theta).zip(&maps.theta_cl).map(|((t, s), c)| t - s + c).collect()
}

/// Composite log-posterior at a substituted argument `at`, on the support of
/// the prior at `theta`. Substitutions move the prior's density term but not
/// its support, so the adjusted posterior is positive wherever the exact one is.
fn substituted_log_posterior(
    theta: &[f64],
    at: &[f64],
    cl: &CompositeLikelihood,
    prior: &Prior,
    weight: f64,
) -> Result<f64> {
    check_dim(prior.dim(), theta.len())?;
    if !prior.contains(theta) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(cl.log_likelihood(at, weight)? + prior.log_kernel(at)?)
}

/// Composite log-posterior with weight `w`, evaluated at `θ − θ* + θ*_CL`
/// so that its mode moves to `θ*`.
pub fn mean_adjusted_log_posterior(
    theta: &[f64],
    maps: &MapEstimates,
    cl: &CompositeLikelihood,
    prior: &Prior,
    weight: f64,
) -> Result<f64> {
    check_dim(maps.theta.len(), theta.len())?;
    substituted_log_posterior(theta, &shifted(theta, maps), cl, prior, weight)
}

fn curvature_point(theta: &[f64], centre: &[f64], theta_cl: &[f64], w: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dim(w.nrows(), theta.len())?;
    let delta = DVector::from_column_slice(theta) - DVector::from_column_slice(centre);
    Ok((DVector::from_column_slice(theta_cl) + w * delta).as_slice().to_vec())
}

/// Composite log-posterior at `θ*_CL + W(θ − θ*_CL)`; same mode as the
/// unadjusted posterior, Hessian there `WᵀH_CL W`.
pub fn curvature_adjusted_log_posterior(
    theta: &[f64],
    maps: &MapEstimates,
    w: &DMatrix<f64>,
    cl: &CompositeLikelihood,
    prior: &Prior,
) -> Result<f64> {
    substituted_log_posterior(theta, &curvature_point(theta, &maps.theta_cl, &maps.theta_cl, w)?, cl, prior, 1.0)
}

/// Curvature adjustment composed with the mean shift: evaluated at
/// `θ*_CL + W(θ − θ*)`, so the mode is `θ*` with Hessian `WᵀH_CL W`.
pub fn mean_curvature_adjusted_log_posterior(
    theta: &[f64],
    maps: &MapEstimates,
    w: &DMatrix<f64>,
    cl: &CompositeLikelihood,
    prior: &Prior,
) -> Result<f64> {
    substituted_log_posterior(theta, &curvature_point(theta, &maps.theta, &maps.theta_cl, w)?, cl, prior, 1.0)
}

/// Settings for a full calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub block_side: usize,
    pub covariance_draws: usize,
    pub bfgs: BfgsConfig,
    /// Defaults to uniform on `[-1, 1]^d`.
    pub prior: Option<Prior>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { block_side: 4, covariance_draws: 50_000, bfgs: BfgsConfig::default(), prior: None }
    }
}

/// Everything needed to build the adjusted posteriors of one lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub model: ModelSpec,
    pub block_side: usize,
    pub blocks: usize,
    pub prior: Prior,
    pub maps: MapEstimates,
    /// `K(s(y))` at `θ*`.
    pub k_full: DMatrix<f64>,
    /// `Σ_i K(s(y_{A_i} | y_{-A_i}))` at `θ*_CL`.
    pub k_cl_sum: DMatrix<f64>,
    pub h_full: DMatrix<f64>,
    pub h_cl: DMatrix<f64>,
    /// Variance ratio, present when `d = 1`.
    pub scalar_weight: Option<MagnitudeWeight>,
    pub weights: Vec<MagnitudeWeight>,
    pub curvature: Option<CurvatureMatrix>,
    pub curvature_error: Option<String>,
    pub gradient_draws: usize,
    pub covariance_draws: usize,
    pub seed: u64,
}

impl CalibrationResult {
    pub fn weight(&self, option: u8) -> Option<f64> {
        if option == 0 {
            return self.scalar_weight.map(|w| w.value);
        }
        self.weights.iter().find(|w| w.option == option).map(|w| w.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Covariances at the MAP pair: full at `θ*`, blocks at `θ*_CL`.
pub fn covariances_at_maps(
    cl: &CompositeLikelihood,
    maps: &MapEstimates,
    config: &CalibrationConfig,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (y, model) = (cl.lattice(), cl.model());
    if config.bfgs.exact_moments {
        let full = exact_full_moments(&maps.theta, model, y.rows(), y.cols())?;
        let blocks = exact_block_moments(cl, &maps.theta_cl)?;
        return Ok((full.covariance, blocks.sum_covariance()));
    }
    let n = config.covariance_draws;
    let full = mc_full_moments(&maps.theta, model, y.rows(), y.cols(), n, &mut stream(seed, &[label::COV_FULL]))?;
    let blocks = mc_block_moments(cl, &maps.theta_cl, n, &mut stream(seed, &[label::COV_BLOCKS]))?;
    Ok((full.covariance, blocks.sum_covariance()))
}

/// MAP pair, Hessians at the modes, all magnitude weights and the
/// curvature matrix for one observed lattice.
pub fn calibrate(y: &Lattice, model: ModelSpec, config: &CalibrationConfig, seed: u64) -> Result<CalibrationResult> {
    let prior = config.prior.clone().unwrap_or_else(|| Prior::default_uniform(model.dim()));
    let blocks = crate::composite::enumerate_blocks(y.rows(), y.cols(), config.block_side)?;
    let cl = CompositeLikelihood::new(y, model, blocks.clone())?;
    let maps = bfgs_map(y, model, &blocks, &prior, &config.bfgs, &mut stream(seed, &[label::MAP]))?;
    calibrate_at(&cl, &prior, maps, config, seed)
}

/// Calibration given already estimated modes.
pub fn calibrate_at(
    cl: &CompositeLikelihood,
    prior: &Prior,
    maps: MapEstimates,
    config: &CalibrationConfig,
    seed: u64,
) -> Result<CalibrationResult> {
    let model = cl.model();
    let (k_full, k_cl_sum) = covariances_at_maps(cl, &maps, config, seed)?;
    let h_full = -&k_full + prior.hessian(&maps.theta)?;
    let h_cl = -&k_cl_sum + prior.hessian(&maps.theta_cl)?;
    let scalar_weight = if model.dim() == 1 { Some(scalar_magnitude_weight(&k_full, &k_cl_sum)?) } else { None };
    let weights = all_magnitude_weights(&k_full, &k_cl_sum)?;
    let (curvature, curvature_error) = match curvature_matrix(&h_full, &h_cl) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(CalibrationResult {
        model,
        block_side: cl.blocks().side(),
        blocks: cl.blocks().len(),
        prior: prior.clone(),
        maps,
        k_full,
        k_cl_sum,
        h_full,
        h_cl,
        scalar_weight,
        weights,
        curvature,
        curvature_error,
        gradient_draws: if config.bfgs.exact_moments { 0 } else { config.bfgs.gradient_draws },
        covariance_draws: if config.bfgs.exact_moments { 0 } else { config.covariance_draws },
        seed,
    })
}
