//! Exact log-partition functions, exact draws and exact moments.
//!
//! The full lattice and every block conditional reduce to the same
//! [`Chain`] recursion: a block with fixed boundary spins is a small lattice
//! whose border sites carry an extra field from their outside neighbours.

mod chain;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use chain::{Chain, ForwardTables, MAX_LAG};

use nalgebra::DMatrix;
use rand::Rng;

use crate::composite::Block;
use crate::error::Result;
use crate::lattice::Lattice;
use crate::model::{Couplings, ModelSpec};

/// Finite-difference step for mean statistics.
pub const MEAN_FD_STEP: f64 = 1e-4;
/// Finite-difference step for covariances (second differences).
pub const COV_FD_STEP: f64 = 1e-3;

/// Chain for the whole lattice, transposed so the lag is `min(rows, cols)`.
fn full_chain(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<(Chain, bool)> {
    model.check_params(theta)?;
    let c = model.couplings(theta);
    if cols < rows {
        Ok((Chain::uniform(cols, rows, c.transposed())?, true))
    } else {
        Ok((Chain::uniform(rows, cols, c)?, false))
    }
}

/// `log z(θ)` by the generalised recursion in `O(n 2^r)` operations.
pub fn log_partition_recursive(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<f64> {
    let (chain, _) = full_chain(theta, model, rows, cols)?;
    Ok(chain.log_partition())
}

fn block_chain(y: &Lattice, block: &Block, c: Couplings) -> Result<Chain> {
    let ctx = block.context(y)?;
    let fields = ctx
        .boundary_vertical
        .iter()
        .zip(&ctx.boundary_horizontal)
        .map(|(&bv, &bh)| c.field + c.vertical * bv as f64 + c.horizontal * bh as f64)
        .collect();
    Chain::new(block.side(), block.side(), fields, c.vertical, c.horizontal)
}

/// `log z(θ, 𝒢, y_A)`: normaliser of the block conditional with the
/// boundary spins read from `y`.
pub fn block_conditional_log_partition(y: &Lattice, block: &Block, theta: &[f64], model: ModelSpec) -> Result<f64> {
    model.check_params(theta)?;
    Ok(block_chain(y, block, model.couplings(theta))?.log_partition())
}

/// Exact sampler for `f(y | θ)` on a full lattice; the forward pass is done
/// once and shared by all draws.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    tables: ForwardTables,
    transposed: bool,
    model: ModelSpec,
}

impl ExactSampler {
    pub fn new(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<Self> {
        let (chain, transposed) = full_chain(theta, model, rows, cols)?;
        Ok(Self { tables: chain.forward()?, transposed, model })
    }

    pub fn log_partition(&self) -> f64 {
        self.tables.log_partition()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Lattice {
        let values = self.tables.sample(rng);
        let l = Lattice::new(self.tables.rows(), self.tables.cols(), values).expect("sampler yields ±1 spins");
        if self.transposed {
            l.transposed()
        } else {
            l
        }
    }

    /// Sufficient statistics of one draw, without building a lattice when
    /// no transposition is needed.
    pub fn sample_stats<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<i8>) -> Vec<f64> {
        let (r, c) = (self.tables.rows(), self.tables.cols());
        buf.resize(r * c, 0);
        self.tables.sample_into(rng, buf);
        let raw = raw_stats_of(r, c, buf);
        let raw = if self.transposed {
            crate::lattice::RawStats { sum: raw.sum, vertical: raw.horizontal, horizontal: raw.vertical }
        } else {
            raw
        };
        self.model.stats_from_raw(raw).as_f64()
    }
}

fn raw_stats_of(rows: usize, cols: usize, x: &[i8]) -> crate::lattice::RawStats {
    let mut s = crate::lattice::RawStats::default();
    let n = rows * cols;
    for i in 0..n {
        let v = x[i] as i64;
        s.sum += v;
        if i % rows + 1 < rows {
            s.vertical += v * x[i + 1] as i64;
        }
        if i + rows < n {
            s.horizontal += v * x[i + rows] as i64;
        }
    }
    s
}

/// One exact draw from `f(y | θ)`.
pub fn exact_sample<R: Rng + ?Sized>(
    theta: &[f64],
    model: ModelSpec,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<Lattice> {
    Ok(ExactSampler::new(theta, model, rows, cols)?.sample(rng))
}

/// Exact sampler for the block conditional `f(y_A | y_{-A}, θ)`.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    tables: ForwardTables,
    boundary_vertical: Vec<i64>,
    boundary_horizontal: Vec<i64>,
    model: ModelSpec,
}

impl BlockSampler {
    pub fn new(y: &Lattice, block: &Block, theta: &[f64], model: ModelSpec) -> Result<Self> {
        model.check_params(theta)?;
        let ctx = block.context(y)?;
        let chain = block_chain(y, block, model.couplings(theta))?;
        Ok(Self {
            tables: chain.forward()?,
            boundary_vertical: ctx.boundary_vertical,
            boundary_horizontal: ctx.boundary_horizontal,
            model,
        })
    }

    pub fn log_partition(&self) -> f64 {
        self.tables.log_partition()
    }

    /// Block configuration, column-major within the block.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i8> {
        self.tables.sample(rng)
    }

    /// `s(y_A | y_{-A})` of one draw.
    pub fn sample_stats<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<i8>) -> Vec<f64> {
        let k = self.tables.rows();
        buf.resize(k * k, 0);
        self.tables.sample_into(rng, buf);
        let raw = crate::composite::block_raw_stats(k, buf, &self.boundary_vertical, &self.boundary_horizontal);
        self.model.stats_from_raw(raw).as_f64()
    }
}

/// One exact draw of the block spins given the rest of `y`.
pub fn exact_block_sample<R: Rng + ?Sized>(
    y: &Lattice,
    block: &Block,
    theta: &[f64],
    model: ModelSpec,
    rng: &mut R,
) -> Result<Vec<i8>> {
    Ok(BlockSampler::new(y, block, theta, model)?.sample(rng))
}

/// Central-difference gradient of `f` at `theta`.
pub fn fd_gradient<F: Fn(&[f64]) -> Result<f64>>(f: F, theta: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for k in 0..theta.len() {
        t[k] = theta[k] + h;
        let up = f(&t)?;
        t[k] = theta[k] - h;
        let down = f(&t)?;
        t[k] = theta[k];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Central second-difference Hessian of `f` at `theta`.
pub fn fd_hessian<F: Fn(&[f64]) -> Result<f64>>(f: F, theta: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let f0 = f(theta)?;
    let mut hess = DMatrix::zeros(d, d);
    let mut t = theta.to_vec();
    for i in 0..d {
        t[i] = theta[i] + h;
        let up = f(&t)?;
        t[i] = theta[i] - h;
        let down = f(&t)?;
        t[i] = theta[i];
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h * h);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                t[i] = theta[i] + si * h;
                t[j] = theta[j] + sj * h;
                let v = f(&t);
                t[i] = theta[i];
                t[j] = theta[j];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Central differences at `h` and `h/2` combined to cancel the `h²` error term.
pub fn richardson_gradient<F: Fn(&[f64]) -> Result<f64>>(f: F, theta: &[f64], h: f64) -> Result<Vec<f64>> {
    let coarse = fd_gradient(&f, theta, h)?;
    let fine = fd_gradient(&f, theta, h / 2.0)?;
    Ok(coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
}

pub fn richardson_hessian<F: Fn(&[f64]) -> Result<f64>>(f: F, theta: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let coarse = fd_hessian(&f, theta, h)?;
    let fine = fd_hessian(&f, theta, h / 2.0)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// `E_{y|θ} s(y) = ∇ log z(θ)` by central finite differences of the recursion.
pub fn exact_mean_stats(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<Vec<f64>> {
    model.check_params(theta)?;
    richardson_gradient(|t| log_partition_recursive(t, model, rows, cols), theta, MEAN_FD_STEP)
}

/// `Cov_{y|θ} s(y)`, the Hessian of `log z(θ)`, by second differences.
pub fn exact_covariance_stats(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    model.check_params(theta)?;
    richardson_hessian(|t| log_partition_recursive(t, model, rows, cols), theta, COV_FD_STEP)
}

/// Exact conditional mean of `s(y_A | y_{-A})`.
pub fn exact_block_mean_stats(y: &Lattice, block: &Block, theta: &[f64], model: ModelSpec) -> Result<Vec<f64>> {
    model.check_params(theta)?;
    richardson_gradient(|t| block_conditional_log_partition(y, block, t, model), theta, MEAN_FD_STEP)
}

/// Exact conditional covariance of `s(y_A | y_{-A})`.
pub fn exact_block_covariance_stats(
    y: &Lattice,
    block: &Block,
    theta: &[f64],
    model: ModelSpec,
) -> Result<DMatrix<f64>> {
    model.check_params(theta)?;
    richardson_hessian(|t| block_conditional_log_partition(y, block, t, model), theta, COV_FD_STEP)
}
