//! Brute-force enumeration oracles for testing.
//!
//! Everything here sums over all `2^n` configurations using only
//! [`Lattice::raw_stats`], so it shares no code path with the recursion.

use nalgebra::{DMatrix, DVector};

use crate::composite::Block;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, RawStats};
use crate::math::log_sum_exp;
use crate::model::ModelSpec;

/// Largest lattice the oracles will enumerate.
pub const MAX_ENUMERATION_SITES: usize = 20;

fn check_size(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_SITES {
        return Err(Error::TooLargeForEnumeration { sites: n, max: MAX_ENUMERATION_SITES });
    }
    Ok(())
}

/// `log z(θ)` by enumerating every configuration.
pub fn log_partition_bruteforce(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<f64> {
    Ok(log_sum_exp(&log_weights(theta, model, rows, cols)?))
}

/// Unnormalised log-weight `θᵀ s(y)` of every configuration, indexed by the
/// bit code of [`Lattice::from_bits`].
pub fn log_weights(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<Vec<f64>> {
    model.check_params(theta)?;
    check_size(rows * cols)?;
    let c = model.couplings(theta);
    (0u64..1 << (rows * cols)).map(|code| Ok(c.energy(Lattice::from_bits(rows, cols, code)?.raw_stats()))).collect()
}

/// Exact probability of every configuration, indexed by bit code.
pub fn configuration_probabilities(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let lw = log_weights(theta, model, rows, cols)?;
    let lz = log_sum_exp(&lw);
    Ok(lw.iter().map(|w| (w - lz).exp()).collect())
}

fn moments(stats: &[Vec<f64>], probs: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = stats[0].len();
    let mut mean = DVector::zeros(d);
    for (s, p) in stats.iter().zip(probs) {
        mean += DVector::from_column_slice(s) * *p;
    }
    let mut cov = DMatrix::zeros(d, d);
    for (s, p) in stats.iter().zip(probs) {
        let c = DVector::from_column_slice(s) - &mean;
        cov += &c * c.transpose() * *p;
    }
    (mean, cov)
}

/// Exact mean and covariance of `s(y)` under `f(y | θ)`.
pub fn stat_moments(theta: &[f64], model: ModelSpec, rows: usize, cols: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let probs = configuration_probabilities(theta, model, rows, cols)?;
    let stats: Vec<Vec<f64>> = (0u64..probs.len() as u64)
        .map(|code| Lattice::from_bits(rows, cols, code).map(|l| model.stats_from_raw(l.raw_stats()).as_f64()))
        .collect::<Result<_>>()?;
    Ok(moments(&stats, &probs))
}

/// Raw statistics of the sites and edges that do not touch the block.
fn outside_stats(y: &Lattice, block: &Block) -> RawStats {
    let inside = |i: usize| block.members().contains(&i);
    let m = y.rows();
    let mut s = RawStats::default();
    for i in 0..y.len() {
        if inside(i) {
            continue;
        }
        s.sum += y.get(i) as i64;
        if i % m + 1 < m && !inside(i + 1) {
            s.vertical += (y.get(i) * y.get(i + 1)) as i64;
        }
        if i + m < y.len() && !inside(i + m) {
            s.horizontal += (y.get(i) * y.get(i + m)) as i64;
        }
    }
    s
}

fn minus(a: RawStats, b: RawStats) -> RawStats {
    RawStats { sum: a.sum - b.sum, vertical: a.vertical - b.vertical, horizontal: a.horizontal - b.horizontal }
}

/// Every block configuration (column-major within the block, indexed by bit
/// code) with its conditional statistics `s(y_A | y_{-A})`.
pub fn block_configurations(y: &Lattice, block: &Block) -> Result<Vec<(Vec<i8>, RawStats)>> {
    let k2 = block.members().len();
    check_size(k2)?;
    let out = outside_stats(y, block);
    (0u64..1 << k2)
        .map(|code| {
            let mut values = y.values().to_vec();
            let cfg: Vec<i8> = (0..k2).map(|b| if code >> b & 1 == 1 { 1 } else { -1 }).collect();
            for (&site, &v) in block.members().iter().zip(&cfg) {
                values[site] = v;
            }
            let full = Lattice::new(y.rows(), y.cols(), values)?;
            Ok((cfg, minus(full.raw_stats(), out)))
        })
        .collect()
}

/// Conditional probability of every block configuration.
pub fn block_probabilities(y: &Lattice, block: &Block, theta: &[f64], model: ModelSpec) -> Result<Vec<f64>> {
    model.check_params(theta)?;
    let c = model.couplings(theta);
    let lw: Vec<f64> = block_configurations(y, block)?.iter().map(|(_, s)| c.energy(*s)).collect();
    let lz = log_sum_exp(&lw);
    Ok(lw.iter().map(|w| (w - lz).exp()).collect())
}

pub fn block_log_partition_bruteforce(y: &Lattice, block: &Block, theta: &[f64], model: ModelSpec) -> Result<f64> {
    model.check_params(theta)?;
    let c = model.couplings(theta);
    let lw: Vec<f64> = block_configurations(y, block)?.iter().map(|(_, s)| c.energy(*s)).collect();
    Ok(log_sum_exp(&lw))
}

/// Exact conditional mean and covariance of `s(y_A | y_{-A})`.
pub fn block_stat_moments(
    y: &Lattice,
    block: &Block,
    theta: &[f64],
    model: ModelSpec,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let probs = block_probabilities(y, block, theta, model)?;
    let stats: Vec<Vec<f64>> =
        block_configurations(y, block)?.iter().map(|(_, s)| model.stats_from_raw(*s).as_f64()).collect();
    Ok(moments(&stats, &probs))
}
