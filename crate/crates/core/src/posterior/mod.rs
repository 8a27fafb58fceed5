//! Reference posteriors and comparison metrics.

pub mod evidence;
pub mod grid;
pub mod mcmc;
pub mod metrics;

pub use evidence::{evidence_importance_sampling, gaussian_draws, importance_sampling_evidence, EvidenceEstimate};
pub use grid::{
    exact_log_posterior_kernel, grid_point, grid_posterior, lattice_axis, laplace_grid, linspace, tabulate, tabulate_masked, trapezoid_weights,
    GridPosterior, GridSpec, LaplaceGridConfig, LogPartitionCache, COVERAGE_TOLERANCE,
};
pub use mcmc::{posterior_covariance, rwm_sample, scaled_proposal, Chain};
pub use metrics::{kl_divergence_grid, variance_ratio_metrics, VarianceRatios};
