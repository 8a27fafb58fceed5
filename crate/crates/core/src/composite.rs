//! Square blocks, conditional composite likelihoods and pseudolikelihood.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{self, BlockSampler};
use crate::lattice::{Direction, Lattice, RawStats};
use crate::model::{local_field, logistic, neighbour_sums, ModelSpec};
use crate::rng::stream;

/// A contiguous `k × k` block `A` of a lattice together with its boundary
/// `B`: the outside sites sharing an edge with `A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    lattice_rows: usize,
    lattice_cols: usize,
    row: usize,
    col: usize,
    k: usize,
    members: Vec<usize>,
    boundary: Vec<usize>,
}

/// Boundary terms of a block for a particular lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockContext {
    /// Per member (column-major in the block): sum of outside vertical neighbours.
    pub boundary_vertical: Vec<i64>,
    /// Per member: sum of outside horizontal neighbours.
    pub boundary_horizontal: Vec<i64>,
    /// Observed `s(y_A | y_{-A})` in raw form.
    pub observed: RawStats,
}

impl Block {
    pub fn new(lattice_rows: usize, lattice_cols: usize, row: usize, col: usize, k: usize) -> Result<Self> {
        if k == 0 || row + k > lattice_rows || col + k > lattice_cols {
            return Err(Error::BlockOutOfBounds { row, col, k, rows: lattice_rows, cols: lattice_cols });
        }
        let m = lattice_rows;
        let members: Vec<usize> = (0..k).flat_map(|c| (0..k).map(move |r| (col + c) * m + row + r)).collect();
        let mut boundary = Vec::new();
        for c in col..col + k {
            if row > 0 {
                boundary.push(c * m + row - 1);
            }
            if row + k < m {
                boundary.push(c * m + row + k);
            }
        }
        for r in row..row + k {
            if col > 0 {
                boundary.push((col - 1) * m + r);
            }
            if col + k < lattice_cols {
                boundary.push((col + k) * m + r);
            }
        }
        boundary.sort_unstable();
        Ok(Self { lattice_rows, lattice_cols, row, col, k, members, boundary })
    }

    pub fn side(&self) -> usize {
        self.k
    }

    /// Top-left corner `(row, col)`.
    pub fn origin(&self) -> (usize, usize) {
        (self.row, self.col)
    }

    pub fn top_left_site(&self) -> usize {
        self.col * self.lattice_rows + self.row
    }

    /// Substream label identifying the block by position and size.
    pub fn stream_key(&self) -> [u64; 2] {
        [self.top_left_site() as u64, self.k as u64]
    }

    /// Member sites, column-major within the block.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Boundary sums and observed conditional statistics for `y`.
    pub fn context(&self, y: &Lattice) -> Result<BlockContext> {
        if y.rows() != self.lattice_rows || y.cols() != self.lattice_cols {
            return Err(Error::BlockOutOfBounds {
                row: self.row,
                col: self.col,
                k: self.k,
                rows: y.rows(),
                cols: y.cols(),
            });
        }
        let k = self.k;
        let mut bv = vec![0i64; k * k];
        let mut bh = vec![0i64; k * k];
        for (idx, &site) in self.members.iter().enumerate() {
            for (nb, dir) in y.neighbours(site) {
                let (nr, nc) = y.coords(nb);
                let inside = nr >= self.row && nr < self.row + k && nc >= self.col && nc < self.col + k;
                if inside {
                    continue;
                }
                match dir {
                    Direction::Vertical => bv[idx] += y.get(nb) as i64,
                    Direction::Horizontal => bh[idx] += y.get(nb) as i64,
                }
            }
        }
        let spins: Vec<i8> = self.members.iter().map(|&s| y.get(s)).collect();
        let observed = block_raw_stats(k, &spins, &bv, &bh);
        Ok(BlockContext { boundary_vertical: bv, boundary_horizontal: bh, observed })
    }
}

/// `s(y_A | y_{-A})` in raw form for block spins `x` (column-major within a
/// `k × k` block): edges inside the block and edges to the boundary each
/// count once.
pub fn block_raw_stats(k: usize, x: &[i8], boundary_vertical: &[i64], boundary_horizontal: &[i64]) -> RawStats {
    let n = k * k;
    let mut s = RawStats::default();
    for i in 0..n {
        let v = x[i] as i64;
        s.sum += v;
        s.vertical += v * boundary_vertical[i];
        s.horizontal += v * boundary_horizontal[i];
        if i % k + 1 < k {
            s.vertical += v * x[i + 1] as i64;
        }
        if i + k < n {
            s.horizontal += v * x[i + k] as i64;
        }
    }
    s
}

/// The collection `{A_i}` of blocks sharing a side length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSet {
    k: usize,
    blocks: Vec<Block>,
}

impl BlockSet {
    pub fn new(k: usize, blocks: Vec<Block>) -> Result<Self> {
        if let Some(b) = blocks.iter().find(|b| b.side() != k) {
            return Err(Error::BlockSideOutOfRange { k: b.side(), max: k });
        }
        Ok(Self { k, blocks })
    }

    pub fn side(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// All `(m - k + 1)(m' - k + 1)` blocks, in column-major order of their
/// top-left corners.
pub fn enumerate_blocks(rows: usize, cols: usize, k: usize) -> Result<BlockSet> {
    let max = rows.min(cols);
    if k == 0 || k > max {
        return Err(Error::BlockSideOutOfRange { k, max });
    }
    let mut blocks = Vec::with_capacity((rows - k + 1) * (cols - k + 1));
    for c in 0..=cols - k {
        for r in 0..=rows - k {
            blocks.push(Block::new(rows, cols, r, c, k)?);
        }
    }
    BlockSet::new(k, blocks)
}

/// `log f(y_A | y_{-A}, θ)`.
pub fn block_conditional_log_density(y: &Lattice, block: &Block, theta: &[f64], model: ModelSpec) -> Result<f64> {
    model.check_params(theta)?;
    let ctx = block.context(y)?;
    let lz = exact::block_conditional_log_partition(y, block, theta, model)?;
    Ok(model.couplings(theta).energy(ctx.observed) - lz)
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::WeightCountMismatch { expected: n, got: weights.len() });
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NegativeWeight { index, value });
    }
    Ok(())
}

/// `Σ_i w_i log f(y_{A_i} | y_{-A_i}, θ)`.
pub fn log_composite_likelihood(
    y: &Lattice,
    theta: &[f64],
    model: ModelSpec,
    blocks: &BlockSet,
    weights: &[f64],
) -> Result<f64> {
    check_weights(weights, blocks.len())?;
    CompositeLikelihood::new(y, model, blocks.clone())?.log_likelihood_weighted(theta, weights)
}

/// `Σ_i log f(y_i | y_{-i}, θ)`.
pub fn log_pseudolikelihood(y: &Lattice, theta: &[f64], model: ModelSpec) -> Result<f64> {
    model.check_params(theta)?;
    let c = model.couplings(theta);
    Ok((0..y.len()).map(|i| logistic(2.0 * y.get(i) as f64 * local_field(y, i, &c)).ln()).sum())
}

/// Per-site design vectors: the local field at site `i` is `cᵢᵀθ`.
fn site_designs(y: &Lattice, model: ModelSpec) -> Vec<Vec<f64>> {
    (0..y.len())
        .map(|i| {
            let (v, h) = neighbour_sums(y, i);
            model.project([1.0, v as f64, h as f64])
        })
        .collect()
}

/// Gradient and Hessian of the log-pseudolikelihood.
pub fn pseudolikelihood_derivatives(y: &Lattice, theta: &[f64], model: ModelSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
    model.check_params(theta)?;
    let d = model.dim();
    let mut g = DVector::zeros(d);
    let mut h = DMatrix::zeros(d, d);
    for (i, c) in site_designs(y, model).into_iter().enumerate() {
        let c = DVector::from_vec(c);
        let u = c.dot(&DVector::from_column_slice(theta));
        let t = u.tanh();
        g += &c * (y.get(i) as f64 - t);
        h -= &c * c.transpose() * (1.0 - t * t);
    }
    Ok((g, h))
}

/// Maximum pseudolikelihood estimate by damped Newton iterations, with the
/// Hessian at the optimum.
pub fn max_pseudolikelihood(y: &Lattice, model: ModelSpec) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = model.dim();
    let mut theta = vec![0.0; d];
    let mut value = log_pseudolikelihood(y, &theta, model)?;
    for _ in 0..100 {
        let (g, h) = pseudolikelihood_derivatives(y, &theta, model)?;
        if g.norm() < 1e-10 {
            break;
        }
        let step = (-h.clone()).cholesky().ok_or_else(|| Error::Degenerate("pseudolikelihood Hessian".into()))?.solve(&g);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let v = log_pseudolikelihood(y, &cand, model)?;
            if v >= value || t < 1e-8 {
                theta = cand;
                value = v;
                break;
            }
            t *= 0.5;
        }
    }
    let (_, h) = pseudolikelihood_derivatives(y, &theta, model)?;
    Ok((theta, h))
}

/// Conditional composite likelihood of one observed lattice, with the block
/// boundary terms precomputed for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompositeLikelihood {
    y: Lattice,
    model: ModelSpec,
    blocks: BlockSet,
    contexts: Vec<BlockContext>,
}

impl CompositeLikelihood {
    pub fn new(y: &Lattice, model: ModelSpec, blocks: BlockSet) -> Result<Self> {
        let contexts = blocks.blocks().iter().map(|b| b.context(y)).collect::<Result<_>>()?;
        Ok(Self { y: y.clone(), model, blocks, contexts })
    }

    pub fn model(&self) -> ModelSpec {
        self.model
    }

    pub fn blocks(&self) -> &BlockSet {
        &self.blocks
    }

    pub fn lattice(&self) -> &Lattice {
        &self.y
    }

    /// Observed `s(y_{A_i} | y_{-A_i})` for every block.
    pub fn observed_block_stats(&self) -> Vec<Vec<f64>> {
        self.contexts.iter().map(|c| self.model.stats_from_raw(c.observed).as_f64()).collect()
    }

    /// `Σ_i s(y_{A_i} | y_{-A_i})`.
    pub fn observed_stats_sum(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.model.dim()];
        for s in self.observed_block_stats() {
            total.iter_mut().zip(s).for_each(|(t, v)| *t += v);
        }
        total
    }

    fn block_log_density(&self, i: usize, theta: &[f64]) -> Result<f64> {
        let c = self.model.couplings(theta);
        let ctx = &self.contexts[i];
        let fields = ctx
            .boundary_vertical
            .iter()
            .zip(&ctx.boundary_horizontal)
            .map(|(&bv, &bh)| c.field + c.vertical * bv as f64 + c.horizontal * bh as f64)
            .collect();
        let k = self.blocks.side();
        let lz = exact::Chain::new(k, k, fields, c.vertical, c.horizontal)?.log_partition();
        Ok(c.energy(ctx.observed) - lz)
    }

    /// Per-block `log f(y_{A_i} | y_{-A_i}, θ)`.
    pub fn block_log_densities(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.model.check_params(theta)?;
        (0..self.blocks.len()).into_par_iter().map(|i| self.block_log_density(i, theta)).collect()
    }

    pub fn log_likelihood_weighted(&self, theta: &[f64], weights: &[f64]) -> Result<f64> {
        check_weights(weights, self.blocks.len())?;
        let parts = self.block_log_densities(theta)?;
        Ok(parts.iter().zip(weights).map(|(p, w)| if *w == 0.0 { 0.0 } else { p * w }).sum())
    }

    /// Composite log-likelihood with the same weight on every block.
    pub fn log_likelihood(&self, theta: &[f64], weight: f64) -> Result<f64> {
        if !(weight >= 0.0) {
            return Err(Error::NegativeWeight { index: 0, value: weight });
        }
        let parts = self.block_log_densities(theta)?;
        Ok(weight * parts.iter().sum::<f64>())
    }

    /// Exact block samplers at `theta`.
    pub fn samplers(&self, theta: &[f64]) -> Result<Vec<BlockSampler>> {
        self.blocks.blocks().par_iter().map(|b| BlockSampler::new(&self.y, b, theta, self.model)).collect()
    }
}

/// For each block, `n_draws` exact draws of `s(y_{A_i} | y_{-A_i})` with the
/// observed boundary held fixed. Each block draws from a substream keyed by
/// its position, so the result does not depend on block order.
pub fn mc_block_stat_draws<R: Rng + ?Sized>(
    y: &Lattice,
    theta: &[f64],
    model: ModelSpec,
    blocks: &BlockSet,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if n_draws < 2 {
        return Err(Error::TooFewDraws { min: 2, got: n_draws });
    }
    let seed: u64 = rng.random();
    let cl = CompositeLikelihood::new(y, model, blocks.clone())?;
    let samplers = cl.samplers(theta)?;
    Ok(samplers
        .par_iter()
        .zip(blocks.blocks())
        .map(|(s, b)| {
            let mut r = stream(seed, &b.stream_key());
            let mut buf = Vec::new();
            (0..n_draws).map(|_| s.sample_stats(&mut r, &mut buf)).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::oracle;
    use crate::math::log_sum_exp;
    use crate::model::site_conditional_probability;

    fn sample_lattice() -> Lattice {
        Lattice::from_row_major(4, 4, &[1, -1, 1, 1, 1, 1, -1, 1, -1, 1, 1, 1, 1, -1, -1, 1]).unwrap()
    }

    #[test]
    fn block_counts() {
        assert_eq!(enumerate_blocks(16, 16, 4).unwrap().len(), 169);
        assert_eq!(enumerate_blocks(5, 7, 1).unwrap().len(), 35);
        let whole = enumerate_blocks(4, 4, 4).unwrap();
        assert_eq!(whole.len(), 1);
        assert!(whole.blocks()[0].boundary().is_empty());
        assert_eq!(enumerate_blocks(3, 5, 2).unwrap().len(), 2 * 4);
        assert!(matches!(enumerate_blocks(3, 5, 4), Err(Error::BlockSideOutOfRange { .. })));
        assert!(enumerate_blocks(3, 5, 0).is_err());
    }

    #[test]
    fn block_geometry() {
        let b = Block::new(5, 5, 1, 2, 2).unwrap();
        assert_eq!(b.members(), &[11, 12, 16, 17]);
        // above: (0,2),(0,3); below: (3,2),(3,3); left: (1,1),(2,1); right: (1,4),(2,4)
        assert_eq!(b.boundary(), &[6, 7, 10, 13, 15, 18, 21, 22]);
        assert!(b.members().iter().all(|m| !b.boundary().contains(m)));
        let order: Vec<(usize, usize)> = enumerate_blocks(3, 3, 2).unwrap().blocks().iter().map(Block::origin).collect();
        assert_eq!(order, vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert!(Block::new(4, 4, 3, 0, 2).is_err());
    }

    #[test]
    fn zero_parameter_density() {
        let y = sample_lattice();
        for b in enumerate_blocks(4, 4, 3).unwrap().blocks() {
            let v = block_conditional_log_density(&y, b, &[0.0, 0.0], ModelSpec::Autologistic).unwrap();
            assert!((v + 9.0 * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_blocks_are_site_conditionals() {
        let y = sample_lattice();
        let theta = [0.2, 0.45];
        for b in enumerate_blocks(4, 4, 1).unwrap().blocks() {
            let v = block_conditional_log_density(&y, b, &theta, ModelSpec::Autologistic).unwrap();
            let p = site_conditional_probability(&y, b.members()[0], &theta, ModelSpec::Autologistic).unwrap();
            assert!((v - p.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn block_densities_normalise() {
        let y = sample_lattice();
        for model in ModelSpec::ALL {
            let theta = &[0.3, -0.6][..model.dim()];
            for b in enumerate_blocks(4, 4, 2).unwrap().blocks() {
                let lz = exact::block_conditional_log_partition(&y, b, theta, model).unwrap();
                let c = model.couplings(theta);
                let terms: Vec<f64> =
                    oracle::block_configurations(&y, b).unwrap().iter().map(|(_, s)| c.energy(*s) - lz).collect();
                assert!(log_sum_exp(&terms).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn observed_stats_match_oracle() {
        let y = sample_lattice();
        for b in enumerate_blocks(4, 4, 2).unwrap().blocks() {
            let ctx = b.context(&y).unwrap();
            let spins: Vec<i8> = b.members().iter().map(|&s| y.get(s)).collect();
            let configs = oracle::block_configurations(&y, b).unwrap();
            let (_, want) = configs.iter().find(|(cfg, _)| *cfg == spins).unwrap();
            assert_eq!(ctx.observed, *want);
        }
    }

    #[test]
    fn composite_special_cases() {
        let y = sample_lattice();
        let theta = [0.1, 0.4];
        let model = ModelSpec::Autologistic;
        let singles = enumerate_blocks(4, 4, 1).unwrap();
        let cl = log_composite_likelihood(&y, &theta, model, &singles, &vec![1.0; 16]).unwrap();
        let pl = log_pseudolikelihood(&y, &theta, model).unwrap();
        assert!((cl - pl).abs() < 1e-12);
        assert_eq!(log_composite_likelihood(&y, &theta, model, &singles, &vec![0.0; 16]).unwrap(), 0.0);

        let whole = enumerate_blocks(4, 4, 4).unwrap();
        let cl = log_composite_likelihood(&y, &theta, model, &whole, &[1.0]).unwrap();
        let exact = crate::model::unnormalized_log_likelihood(&y, &theta, model).unwrap()
            - exact::log_partition_recursive(&theta, model, 4, 4).unwrap();
        assert!((cl - exact).abs() < 1e-10);

        let pairs = enumerate_blocks(4, 4, 2).unwrap();
        let w1 = vec![0.7; pairs.len()];
        let w2 = vec![1.4; pairs.len()];
        let a = log_composite_likelihood(&y, &theta, model, &pairs, &w1).unwrap();
        let b = log_composite_likelihood(&y, &theta, model, &pairs, &w2).unwrap();
        assert!((2.0 * a - b).abs() < 1e-10);

        assert!(matches!(
            log_composite_likelihood(&y, &theta, model, &pairs, &[1.0]),
            Err(Error::WeightCountMismatch { .. })
        ));
        let mut bad = w1.clone();
        bad[3] = -1.0;
        assert!(matches!(log_composite_likelihood(&y, &theta, model, &pairs, &bad), Err(Error::NegativeWeight { index: 3, .. })));
    }

    #[test]
    fn pseudolikelihood_values() {
        let y = Lattice::filled(2, 2, 1).unwrap();
        let v = log_pseudolikelihood(&y, &[0.4], ModelSpec::IsingIsotropic).unwrap();
        let want = 4.0 * (0.8f64.exp() / (0.8f64.exp() + (-0.8f64).exp())).ln();
        assert!((v - want).abs() < 1e-14);
        let v = log_pseudolikelihood(&sample_lattice(), &[0.0, 0.0], ModelSpec::Autologistic).unwrap();
        assert!((v + 16.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pseudolikelihood_derivatives_match_finite_differences() {
        let y = sample_lattice();
        for model in ModelSpec::ALL {
            let theta = &[0.15, 0.35][..model.dim()];
            let (g, h) = pseudolikelihood_derivatives(&y, theta, model).unwrap();
            let fg = exact::fd_gradient(|t| log_pseudolikelihood(&y, t, model), theta, 1e-5).unwrap();
            let fh = exact::fd_hessian(|t| log_pseudolikelihood(&y, t, model), theta, 1e-4).unwrap();
            for i in 0..model.dim() {
                assert!((g[i] - fg[i]).abs() < 1e-7);
                for j in 0..model.dim() {
                    assert!((h[(i, j)] - fh[(i, j)]).abs() < 1e-4);
                }
            }
        }
        let (theta, _) = max_pseudolikelihood(&y, ModelSpec::Autologistic).unwrap();
        let (g, _) = pseudolikelihood_derivatives(&y, &theta, ModelSpec::Autologistic).unwrap();
        assert!(g.norm() < 1e-8);
    }

    #[test]
    fn block_gradient_identity() {
        let y = sample_lattice();
        let model = ModelSpec::Autologistic;
        let theta = [0.1, 0.3];
        for b in enumerate_blocks(4, 4, 2).unwrap().blocks() {
            let fd = exact::fd_gradient(|t| block_conditional_log_density(&y, b, t, model), &theta, 1e-5).unwrap();
            let (mean, _) = oracle::block_stat_moments(&y, b, &theta, model).unwrap();
            let obs = model.stats_from_raw(b.context(&y).unwrap().observed).as_f64();
            for i in 0..2 {
                assert!((fd[i] - (obs[i] - mean[i])).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn mc_draws_are_seeded_and_centred() {
        let y = sample_lattice();
        let singles = enumerate_blocks(4, 4, 1).unwrap();
        let mut r1 = stream(5, &[]);
        let mut r2 = stream(5, &[]);
        let a = mc_block_stat_draws(&y, &[0.0, 0.0], ModelSpec::Autologistic, &singles, 4000, &mut r1).unwrap();
        let b = mc_block_stat_draws(&y, &[0.0, 0.0], ModelSpec::Autologistic, &singles, 4000, &mut r2).unwrap();
        assert_eq!(a, b);
        for block in &a {
            let mean = block.iter().map(|s| s[0]).sum::<f64>() / 4000.0;
            assert!(mean.abs() < 4.0 / 4000f64.sqrt());
        }
        assert!(matches!(
            mc_block_stat_draws(&y, &[0.0, 0.0], ModelSpec::Autologistic, &singles, 1, &mut r1),
            Err(Error::TooFewDraws { .. })
        ));
    }

    #[test]
    fn mc_block_covariance_matches_enumeration() {
        let y = sample_lattice();
        let pairs = enumerate_blocks(4, 4, 2).unwrap();
        let theta = [0.4];
        let model = ModelSpec::IsingIsotropic;
        let n = 20_000;
        let draws = mc_block_stat_draws(&y, &theta, model, &pairs, n, &mut stream(9, &[])).unwrap();
        for (b, d) in pairs.blocks().iter().zip(&draws) {
            let (_, cov) = oracle::block_stat_moments(&y, b, &theta, model).unwrap();
            let xs: Vec<f64> = d.iter().map(|s| s[0]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
            // standard error of the sample variance
            let se = ((m4 - var * var) / n as f64).sqrt();
            assert!((var - cov[(0, 0)]).abs() < 3.0 * se + 1e-9, "{var} vs {}", cov[(0, 0)]);
        }
    }
}
