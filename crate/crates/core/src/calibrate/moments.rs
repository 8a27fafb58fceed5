//! Moments of sufficient statistics, by exact draws or exact differentiation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composite::CompositeLikelihood;
use crate::error::{Error, Result};
use crate::exact::{self, ExactSampler};
use crate::math::{symmetric_eigenvalues, MomentAccumulator};
use crate::model::ModelSpec;
use crate::rng::stream;

/// Draws are split into this many independently seeded chunks, so results
/// do not depend on the thread count.
const DRAW_CHUNKS: usize = 8;

/// Mean vector and covariance matrix of `s(y)` at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Number of Monte Carlo draws; 0 for exact moments.
    pub n_draws: usize,
}

impl MomentEstimates {
    pub fn exact(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self { mean, covariance, n_draws: 0 }
    }

    pub fn from_accumulator(acc: &MomentAccumulator) -> Self {
        Self { mean: acc.mean(), covariance: acc.covariance(), n_draws: acc.count() }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_exact(&self) -> bool {
        self.n_draws == 0
    }

    /// Standard errors of the mean components.
    pub fn mean_standard_errors(&self) -> DVector<f64> {
        if self.is_exact() {
            return DVector::zeros(self.dim());
        }
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|i| (self.covariance[(i, i)] / self.n_draws as f64).sqrt()))
    }

    /// Covariance of the sample mean; zero for exact moments.
    pub fn mean_estimator_covariance(&self) -> DMatrix<f64> {
        if self.is_exact() {
            return DMatrix::zeros(self.dim(), self.dim());
        }
        &self.covariance / self.n_draws as f64
    }

    /// Fails if the covariance has an eigenvalue below `-tol`.
    pub fn check_psd(&self, tol: f64) -> Result<()> {
        let ev = symmetric_eigenvalues(&self.covariance);
        if ev[0] < -tol {
            return Err(Error::Degenerate(format!("covariance has eigenvalue {:.3e}", ev[0])));
        }
        Ok(())
    }
}

fn chunk_sizes(n: usize) -> Vec<usize> {
    (0..DRAW_CHUNKS).map(|c| n / DRAW_CHUNKS + usize::from(c < n % DRAW_CHUNKS)).filter(|&s| s > 0).collect()
}

/// Monte Carlo moments from `n_draws` exact draws of an existing sampler.
pub fn sampler_moments(sampler: &ExactSampler, dim: usize, n_draws: usize, seed: u64) -> Result<MomentEstimates> {
    if n_draws < 2 {
        return Err(Error::TooFewDraws { min: 2, got: n_draws });
    }
    let accs: Vec<MomentAccumulator> = chunk_sizes(n_draws)
        .into_par_iter()
        .enumerate()
        .map(|(c, size)| {
            let mut rng = stream(seed, &[c as u64]);
            let mut acc = MomentAccumulator::new(dim);
            let mut buf = Vec::new();
            for _ in 0..size {
                acc.push(&sampler.sample_stats(&mut rng, &mut buf));
            }
            acc
        })
        .collect();
    let mut total = MomentAccumulator::new(dim);
    accs.iter().for_each(|a| total.merge(a));
    Ok(MomentEstimates::from_accumulator(&total))
}

/// Sample mean and unbiased sample covariance of `s(y)` over exact draws
/// from `f(y | θ)`.
pub fn mc_full_moments<R: Rng + ?Sized>(
    theta: &[f64],
    model: ModelSpec,
    rows: usize,
    cols: usize,
    n_draws: usize,
    rng: &mut R,
) -> Result<MomentEstimates> {
    if n_draws < 2 {
        return Err(Error::TooFewDraws { min: 2, got: n_draws });
    }
    let sampler = ExactSampler::new(theta, model, rows, cols)?;
    sampler_moments(&sampler, model.dim(), n_draws, rng.random())
}

/// Exact moments from derivatives of `log z`.
pub fn exact_full_moments(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<MomentEstimates> {
    let mean = exact::exact_mean_stats(theta, model, rows, cols)?;
    let cov = exact::exact_covariance_stats(theta, model, rows, cols)?;
    Ok(MomentEstimates::exact(DVector::from_vec(mean), crate::math::symmetrize(&cov)))
}

/// Conditional moments of `s(y_{A_i} | y_{-A_i})` for every block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMoments {
    pub blocks: Vec<MomentEstimates>,
    /// Summation order: blocks sorted by position.
    order: Vec<usize>,
}

impl BlockMoments {
    fn new(blocks: Vec<MomentEstimates>, cl: &CompositeLikelihood) -> Self {
        let keys: Vec<[u64; 2]> = cl.blocks().blocks().iter().map(|b| b.stream_key()).collect();
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.sort_by_key(|&i| keys[i]);
        Self { blocks, order }
    }

    pub fn dim(&self) -> usize {
        self.blocks.first().map_or(0, MomentEstimates::dim)
    }

    pub fn n_draws(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.n_draws)
    }

    /// `Σ_i E s(y_{A_i} | y_{-A_i})`.
    pub fn sum_mean(&self) -> DVector<f64> {
        self.order.iter().fold(DVector::zeros(self.dim()), |acc, &i| acc + &self.blocks[i].mean)
    }

    /// `Σ_i K(s(y_{A_i} | y_{-A_i}))`.
    pub fn sum_covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.order.iter().fold(DMatrix::zeros(d, d), |acc, &i| acc + &self.blocks[i].covariance)
    }

    /// Covariance of `sum_mean` as an estimator; block draws are
    /// independent, so covariances add.
    pub fn sum_mean_estimator_covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        if self.n_draws() == 0 {
            return DMatrix::zeros(d, d);
        }
        self.sum_covariance() / self.n_draws() as f64
    }

    /// Standard errors of the components of `sum_mean`; block draws are
    /// independent, so variances add.
    pub fn sum_mean_standard_errors(&self) -> DVector<f64> {
        if self.n_draws() == 0 {
            return DVector::zeros(self.dim());
        }
        let cov = self.sum_covariance();
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|i| (cov[(i, i)] / self.n_draws() as f64).sqrt()))
    }
}

/// Monte Carlo block moments from exact block draws with the observed
/// boundaries held fixed. Each block uses a substream keyed by its position.
pub fn mc_block_moments<R: Rng + ?Sized>(
    cl: &CompositeLikelihood,
    theta: &[f64],
    n_draws: usize,
    rng: &mut R,
) -> Result<BlockMoments> {
    if n_draws < 2 {
        return Err(Error::TooFewDraws { min: 2, got: n_draws });
    }
    let seed: u64 = rng.random();
    let d = cl.model().dim();
    let samplers = cl.samplers(theta)?;
    let blocks = samplers
        .par_iter()
        .zip(cl.blocks().blocks())
        .map(|(s, b)| {
            let mut r = stream(seed, &b.stream_key());
            let mut acc = MomentAccumulator::new(d);
            let mut buf = Vec::new();
            for _ in 0..n_draws {
                acc.push(&s.sample_stats(&mut r, &mut buf));
            }
            MomentEstimates::from_accumulator(&acc)
        })
        .collect();
    Ok(BlockMoments::new(blocks, cl))
}

/// Exact block moments from derivatives of the block normalisers.
pub fn exact_block_moments(cl: &CompositeLikelihood, theta: &[f64]) -> Result<BlockMoments> {
    let (y, model) = (cl.lattice(), cl.model());
    let blocks = cl
        .blocks()
        .blocks()
        .par_iter()
        .map(|b| {
            let mean = exact::exact_block_mean_stats(y, b, theta, model)?;
            let cov = exact::exact_block_covariance_stats(y, b, theta, model)?;
            Ok(MomentEstimates::exact(DVector::from_vec(mean), crate::math::symmetrize(&cov)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockMoments::new(blocks, cl))
}
