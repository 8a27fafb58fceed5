//! Site-by-site elimination over a rectangular region in column-major order.
//!
//! The unnormalised density factorises as `Π_j q_j(y_j, y_{j+1}, y_{j+R})`
//! with `R` the number of rows (the lag). Summing out `y_0, y_1, ...` in turn
//! leaves a table over the next `R` spins, so each step costs `O(2^R)`.
//!
//! Tables are kept in linear scale and renormalised to a unit maximum after
//! every step; the logarithms of the scale factors are accumulated, which is
//! the log-sum-exp stabilisation applied one step at a time.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Couplings;

/// Largest lag accepted by the recursion.
pub const MAX_LAG: usize = 20;

/// Memory ceiling for stored forward tables (bytes).
pub const MAX_TABLE_BYTES: usize = 1 << 31;

#[derive(Debug, Clone)]
pub struct Chain {
    rows: usize,
    cols: usize,
    /// Per-site external field, column-major.
    fields: Vec<f64>,
    vertical: f64,
    horizontal: f64,
}

/// Stored partial sums of a forward pass, reusable for any number of exact
/// draws at the same parameter.
#[derive(Debug, Clone)]
pub struct ForwardTables {
    rows: usize,
    cols: usize,
    /// `tables[j * 2^R ..]` sums out sites `0..j`, indexed by spins `j..j+R`.
    tables: Vec<f64>,
    factors: Vec<[f64; 8]>,
    log_z: f64,
}

#[inline]
fn spin(bit: usize) -> f64 {
    if bit == 1 {
        1.0
    } else {
        -1.0
    }
}

impl Chain {
    pub fn new(rows: usize, cols: usize, fields: Vec<f64>, vertical: f64, horizontal: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape { rows, cols });
        }
        if fields.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: fields.len() });
        }
        if rows > MAX_LAG {
            return Err(Error::LagOverflow { lag: rows, max: MAX_LAG });
        }
        Ok(Self { rows, cols, fields, vertical, horizontal })
    }

    /// Homogeneous lattice with the given couplings.
    pub fn uniform(rows: usize, cols: usize, c: Couplings) -> Result<Self> {
        Self::new(rows, cols, vec![c.field; rows * cols], c.vertical, c.horizontal)
    }

    pub fn sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn lag(&self) -> usize {
        self.rows
    }

    /// `q_j` for all 8 combinations of `(y_j, y_{j+1}, y_{j+R})`, indexed by
    /// `b_j | b_{j+1} << 1 | b_{j+R} << 2` with bit 1 meaning spin +1.
    fn factor(&self, j: usize) -> [f64; 8] {
        let v = if j % self.rows + 1 < self.rows { self.vertical } else { 0.0 };
        let h = if j + self.rows < self.sites() { self.horizontal } else { 0.0 };
        let f = self.fields[j];
        let mut q = [0.0; 8];
        for (idx, slot) in q.iter_mut().enumerate() {
            let yj = spin(idx & 1);
            let next = spin(idx >> 1 & 1);
            let far = spin(idx >> 2 & 1);
            *slot = (yj * (f + v * next + h * far)).exp();
        }
        q
    }

    /// One elimination step. With the top bit of the new index fixed, pairs
    /// of new entries read four consecutive old entries.
    #[inline]
    fn step(&self, old: &[f64], new: &mut [f64], q: &[f64; 8]) -> f64 {
        let r = self.rows;
        let half = old.len() / 2;
        let mut max = 0.0f64;
        if r == 1 {
            // new index is the single spin y_{j+1} = y_{j+R}
            new[0] = old[0] * q[0] + old[1] * q[1];
            new[1] = old[0] * q[6] + old[1] * q[7];
            return new[0].max(new[1]);
        }
        for hi in 0..2 {
            let (a0, a1) = (q[hi << 2], q[hi << 2 | 1]);
            let (b0, b1) = (q[hi << 2 | 2], q[hi << 2 | 3]);
            let out = &mut new[hi * half..(hi + 1) * half];
            for (o, w) in out.chunks_exact_mut(2).zip(old.chunks_exact(4)) {
                let x = w[0] * a0 + w[1] * a1;
                let y = w[2] * b0 + w[3] * b1;
                o[0] = x;
                o[1] = y;
                max = max.max(x).max(y);
            }
        }
        max
    }

    /// `log z` without storing intermediate tables.
    pub fn log_partition(&self) -> f64 {
        let size = 1usize << self.rows;
        let mut old = vec![1.0f64; size];
        let mut new = vec![0.0f64; size];
        let mut log_scale = 0.0;
        for j in 0..self.sites() {
            let q = self.factor(j);
            let max = self.step(&old, &mut new, &q);
            let inv = 1.0 / max;
            new.iter_mut().for_each(|v| *v *= inv);
            log_scale += max.ln();
            std::mem::swap(&mut old, &mut new);
        }
        // every remaining index refers only to padding spins, so all entries agree
        log_scale + old[0].ln()
    }

    /// Forward pass keeping every table for exact sampling.
    pub fn forward(&self) -> Result<ForwardTables> {
        let size = 1usize << self.rows;
        let n = self.sites();
        let bytes = n.saturating_mul(size).saturating_mul(8);
        if bytes > MAX_TABLE_BYTES {
            return Err(Error::LagOverflow { lag: self.rows, max: MAX_LAG.min(self.rows.saturating_sub(1)) });
        }
        let mut tables = vec![0.0f64; n * size];
        tables[..size].iter_mut().for_each(|v| *v = 1.0);
        let mut factors = Vec::with_capacity(n);
        let mut last = vec![0.0f64; size];
        let mut log_scale = 0.0;
        for j in 0..n {
            let q = self.factor(j);
            factors.push(q);
            let (head, tail) = tables.split_at_mut((j + 1) * size);
            let old = &head[j * size..];
            let new = if j + 1 < n { &mut tail[..size] } else { &mut last[..] };
            let max = self.step(old, new, &q);
            let inv = 1.0 / max;
            new.iter_mut().for_each(|v| *v *= inv);
            log_scale += max.ln();
        }
        Ok(ForwardTables { rows: self.rows, cols: self.cols, tables, factors, log_z: log_scale + last[0].ln() })
    }
}

impl ForwardTables {
    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// One exact draw, column-major spins of the region.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i8> {
        let mut out = vec![0i8; self.rows * self.cols];
        self.sample_into(rng, &mut out);
        out
    }

    /// Backward pass: `P(y_j | y_{j+1}, ...) ∝ F_j(y_j, ..., y_{j+R-1}) q_j(y_j, y_{j+1}, y_{j+R})`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [i8]) {
        let r = self.rows;
        let size = 1usize << r;
        let mask = size - 1;
        // window over spins j+1 .. j+R, bit b <-> site j+1+b; padding spins read as -1
        let mut window = 0usize;
        for j in (0..out.len()).rev() {
            let table = &self.tables[j * size..(j + 1) * size];
            let sel = (window & 1) << 1 | (window >> (r - 1) & 1) << 2;
            let rest = (window << 1) & mask;
            let q = &self.factors[j];
            let w_minus = table[rest] * q[sel];
            let w_plus = table[rest | 1] * q[sel | 1];
            let u: f64 = rng.random();
            let up = u * (w_minus + w_plus) < w_plus;
            out[j] = if up { 1 } else { -1 };
            window = ((window << 1) | up as usize) & mask;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log_sum_exp;

    /// Direct enumeration with per-site fields, independent of the recursion.
    fn enumerate(rows: usize, cols: usize, fields: &[f64], v: f64, h: f64) -> f64 {
        let n = rows * cols;
        let terms: Vec<f64> = (0u64..1 << n)
            .map(|code| {
                let s = |i: usize| if code >> i & 1 == 1 { 1.0 } else { -1.0 };
                let mut e = 0.0;
                for i in 0..n {
                    e += fields[i] * s(i);
                    if i % rows + 1 < rows {
                        e += v * s(i) * s(i + 1);
                    }
                    if i + rows < n {
                        e += h * s(i) * s(i + rows);
                    }
                }
                e
            })
            .collect();
        log_sum_exp(&terms)
    }

    #[test]
    fn heterogeneous_fields_match_enumeration() {
        for (rows, cols) in [(1, 1), (1, 4), (2, 3), (3, 2), (3, 3)] {
            let fields: Vec<f64> = (0..rows * cols).map(|i| 0.3 * ((i * 7 % 5) as f64 - 2.0)).collect();
            let chain = Chain::new(rows, cols, fields.clone(), 0.45, -0.2).unwrap();
            let want = enumerate(rows, cols, &fields, 0.45, -0.2);
            assert!((chain.log_partition() - want).abs() < 1e-12, "{rows}x{cols}");
            assert!((chain.forward().unwrap().log_partition() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn lag_limit() {
        assert!(matches!(Chain::uniform(21, 2, Couplings::default()), Err(Error::LagOverflow { .. })));
    }
}
