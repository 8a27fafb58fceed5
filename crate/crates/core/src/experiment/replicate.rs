//! One replicate: simulate, calibrate, build the reference posterior and
//! score every approximation against it.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TrueCovariance};
use crate::calibrate::{
    bfgs_map, calibrate_at, log_cl_posterior, mean_adjusted_log_posterior, mean_curvature_adjusted_log_posterior,
    CalibrationResult, Prior, WEIGHT_OPTIONS,
};
use crate::composite::{enumerate_blocks, log_pseudolikelihood, max_pseudolikelihood, CompositeLikelihood};
use crate::error::{Error, Result};
use crate::exact::exact_sample;
use crate::lattice::Lattice;
use crate::model::{sufficient_statistics, ModelSpec};
use crate::posterior::{
    exact_log_posterior_kernel, grid_point, importance_sampling_evidence, kl_divergence_grid, laplace_grid,
    posterior_covariance, rwm_sample, scaled_proposal, variance_ratio_metrics, GridPosterior, LogPartitionCache,
};
use crate::rng::{derive_seed, label, stream};

/// Scores of one approximate posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    /// `K_approx / K_true` for one parameter, `‖K_approx K_true⁻¹‖_F / √d`
    /// otherwise.
    pub variance_ratio: f64,
    /// `‖I − K_approx K_true⁻¹‖_F²`.
    pub squared_error: f64,
    /// `KL(true ‖ approx)`.
    pub kl: f64,
    pub mode: Vec<f64>,
    /// Row-major posterior covariance.
    pub covariance: Vec<f64>,
}

/// Wall-clock seconds per stage. Kept out of the deterministic outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulate: f64,
    pub map: f64,
    pub covariance: f64,
    pub truth: f64,
    pub approximations: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    /// Set when any stage failed; the remaining fields are then partial.
    pub error: Option<String>,
    pub statistics: Vec<i64>,
    pub theta_star: Vec<f64>,
    pub theta_cl: Vec<f64>,
    pub iterations: usize,
    pub iterations_cl: usize,
    pub scalar_weight: Option<f64>,
    /// Magnitude weights for options 1 to 5.
    pub weights: Vec<f64>,
    /// Row-major curvature matrix `W`.
    pub curvature: Option<Vec<f64>>,
    pub true_mean: Vec<f64>,
    pub true_covariance: Vec<f64>,
    pub mcmc_acceptance: Option<f64>,
    pub log_evidence_grid: Option<f64>,
    pub log_evidence_is: Option<f64>,
    pub log_evidence_is_se: Option<f64>,
    pub evidence_error: Option<String>,
    pub grid_points: usize,
    pub methods: Vec<MethodMetrics>,
    pub timings: Timings,
}

impl ReplicateRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn method(&self, name: &str) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Seed of replicate `index`; independent of the replicate count.
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, &[index as u64])
}

/// Exact draw of the lattice observed in replicate `index`.
pub fn simulate_replicate(config: &ExperimentConfig, index: usize) -> Result<Lattice> {
    let seed = replicate_seed(config.seed, index);
    exact_sample(&config.theta, config.model, config.rows, config.cols, &mut stream(seed, &[label::SIMULATE]))
}

/// Log-density kernel of one approximation together with the Gaussian
/// guess used to lay out its own normalisation grid.
struct Approximation<'a> {
    name: String,
    mode: Vec<f64>,
    cov: DMatrix<f64>,
    target: Box<dyn Fn(&[f64]) -> Result<f64> + Sync + 'a>,
}

fn laplace_covariance(h: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let neg = -crate::math::symmetrize(h);
    neg.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotNegativeDefinite(format!("{what} Hessian at the mode")))
}

fn approximations<'a>(
    config: &ExperimentConfig,
    y: &'a Lattice,
    cl: &'a CompositeLikelihood,
    prior: &'a Prior,
    cal: &'a CalibrationResult,
) -> Result<Vec<Approximation<'a>>> {
    let model = config.model;
    let maps = &cal.maps;
    let mut out = Vec::new();
    for name in config.methods() {
        let a = match name.as_str() {
            "pseudo" => {
                let (mode, h) = max_pseudolikelihood(y, model)?;
                let h = h + prior.hessian(&mode)?;
                Approximation {
                    name,
                    cov: laplace_covariance(&h, "pseudolikelihood")?,
                    mode,
                    target: Box::new(move |t| {
                        let lp = prior.log_density(t)?;
                        if lp == f64::NEG_INFINITY {
                            return Ok(lp);
                        }
                        Ok(log_pseudolikelihood(y, t, model)? + lp)
                    }),
                }
            }
            "cl_unadjusted" => Approximation {
                name,
                mode: maps.theta_cl.clone(),
                cov: laplace_covariance(&cal.h_cl, "composite")?,
                target: Box::new(move |t| log_cl_posterior(t, cl, prior, 1.0)),
            },
            "cl_curvature" => {
                let w = cal
                    .curvature
                    .as_ref()
                    .ok_or_else(|| Error::Singular(cal.curvature_error.clone().unwrap_or_default()))?;
                Approximation {
                    name,
                    mode: maps.theta.clone(),
                    cov: laplace_covariance(&cal.h_full, "full")?,
                    target: Box::new(move |t| mean_curvature_adjusted_log_posterior(t, maps, &w.w, cl, prior)),
                }
            }
            _ => {
                let option = match name.as_str() {
                    "cl_calibrated" => 0,
                    other => other
                        .strip_prefix("cl_w")
                        .and_then(|o| o.parse().ok())
                        .ok_or_else(|| Error::Config(format!("unknown method '{other}'")))?,
                };
                let w = cal.weight(option).ok_or(Error::UnknownWeightOption(option))?;
                Approximation {
                    name,
                    mode: maps.theta.clone(),
                    cov: laplace_covariance(&(&cal.h_cl * w), "weighted composite")?,
                    target: Box::new(move |t| mean_adjusted_log_posterior(t, maps, cl, prior, w)),
                }
            }
        };
        out.push(a);
    }
    Ok(out)
}

/// Reference posterior of one replicate.
pub struct Truth {
    pub grid: GridPosterior,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub mcmc_acceptance: Option<f64>,
}

fn truth(config: &ExperimentConfig, y: &Lattice, prior: &Prior, cal: &CalibrationResult, seed: u64) -> Result<Truth> {
    let cache = LogPartitionCache::new(config.model, config.rows, config.cols);
    let kernel = |t: &[f64]| exact_log_posterior_kernel(t, y, config.model, prior, Some(&cache));
    let laplace = laplace_covariance(&cal.h_full, "full")?;
    let grid = laplace_grid(kernel, &cal.maps.theta, &laplace, &config.grid)?;
    match config.true_covariance {
        TrueCovariance::Grid => {
            Ok(Truth { mean: grid.mean(), covariance: grid.covariance(), grid, mcmc_acceptance: None })
        }
        TrueCovariance::Mcmc => {
            let chain = rwm_sample(
                kernel,
                &cal.maps.theta,
                config.mcmc_iterations,
                config.mcmc_burn_in,
                &scaled_proposal(&laplace),
                &mut stream(seed, &[label::MCMC]),
            )?;
            Ok(Truth {
                mean: chain.mean(),
                covariance: posterior_covariance(&chain)?,
                grid,
                mcmc_acceptance: Some(chain.acceptance_rate),
            })
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Every per-replicate quantity plus, on request, the grids of the
/// reference and approximate posteriors.
pub struct ReplicateOutput {
    pub record: ReplicateRecord,
    /// Reference grid followed by every approximation on the same points.
    pub grids: Option<(GridPosterior, Vec<(String, GridPosterior)>)>,
}

/// Runs replicate `index`. Failures are stored in the record.
pub fn run_replicate(config: &ExperimentConfig, index: usize) -> ReplicateOutput {
    let seed = replicate_seed(config.seed, index);
    let mut record = ReplicateRecord { replicate: index, seed, ..Default::default() };
    let start = Instant::now();
    let grids = match fill_record(config, seed, &mut record) {
        Ok(g) => g,
        Err(e) => {
            record.error = Some(e.to_string());
            None
        }
    };
    record.timings.total = start.elapsed().as_secs_f64();
    ReplicateOutput { record, grids }
}

fn fill_record(
    config: &ExperimentConfig,
    seed: u64,
    record: &mut ReplicateRecord,
) -> Result<Option<(GridPosterior, Vec<(String, GridPosterior)>)>> {
    let model: ModelSpec = config.model;
    let prior = config.prior();
    let clock = Instant::now();
    let y = exact_sample(&config.theta, model, config.rows, config.cols, &mut stream(seed, &[label::SIMULATE]))?;
    record.statistics = sufficient_statistics(&y, model).0;
    record.timings.simulate = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let blocks = enumerate_blocks(config.rows, config.cols, config.calibration.block_side)?;
    let cl = CompositeLikelihood::new(&y, model, blocks.clone())?;
    let maps = bfgs_map(&y, model, &blocks, &prior, &config.calibration.bfgs, &mut stream(seed, &[label::MAP]))?;
    record.theta_star = maps.theta.clone();
    record.theta_cl = maps.theta_cl.clone();
    record.iterations = maps.iterations;
    record.iterations_cl = maps.iterations_cl;
    record.timings.map = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let cal = calibrate_at(&cl, &prior, maps, &config.calibration, seed)?;
    record.scalar_weight = cal.weight(0);
    record.weights = WEIGHT_OPTIONS.iter().filter_map(|o| cal.weight(*o)).collect();
    record.curvature = cal.curvature.as_ref().map(|c| row_major(&c.w));
    record.timings.covariance = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let truth = truth(config, &y, &prior, &cal, seed)?;
    record.true_mean = truth.mean.as_slice().to_vec();
    record.true_covariance = row_major(&truth.covariance);
    record.mcmc_acceptance = truth.mcmc_acceptance;
    record.log_evidence_grid = Some(truth.grid.log_evidence);
    record.grid_points = truth.grid.log_density.iter().filter(|v| v.is_finite()).count();
    let cache = LogPartitionCache::new(model, config.rows, config.cols);
    let evidence = importance_sampling_evidence(
        |t| exact_log_posterior_kernel(t, &y, model, &prior, Some(&cache)),
        truth.mean.as_slice(),
        &(&truth.covariance * config.evidence_inflation),
        config.evidence_points,
        &mut stream(seed, &[label::EVIDENCE]),
    );
    match evidence {
        Ok(e) => {
            record.log_evidence_is = Some(e.log_evidence);
            record.log_evidence_is_se = Some(e.log_standard_error);
        }
        Err(e) => record.evidence_error = Some(e.to_string()),
    }
    record.timings.truth = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let evaluated: Vec<bool> = truth.grid.log_density.iter().map(|v| v.is_finite()).collect();
    let mut kept = Vec::new();
    for a in approximations(config, &y, &cl, &prior, &cal)? {
        let own = laplace_grid(&a.target, &a.mode, &a.cov, &config.grid)?;
        let axes = &truth.grid.axes;
        let values: Vec<f64> = (0..evaluated.len())
            .into_par_iter()
            .map(|i| if evaluated[i] { (a.target)(&grid_point(axes, i)) } else { Ok(f64::NEG_INFINITY) })
            .collect::<Result<_>>()?;
        let on_truth = GridPosterior::with_log_normalizer(axes.clone(), values, own.log_evidence)?;
        let k_approx = own.covariance();
        let ratios = variance_ratio_metrics(&k_approx, &truth.covariance)?;
        record.methods.push(MethodMetrics {
            method: a.name.clone(),
            variance_ratio: ratios.ratio.unwrap_or(ratios.frobenius_ratio),
            squared_error: ratios.squared_error,
            kl: kl_divergence_grid(&truth.grid, &on_truth)?,
            mode: own.argmax(),
            covariance: row_major(&k_approx),
        });
        if config.save_grids {
            kept.push((a.name, on_truth));
        }
    }
    record.timings.approximations = clock.elapsed().as_secs_f64();
    Ok(config.save_grids.then_some((truth.grid, kept)))
}
