//! Densities tabulated on rectangular grids, integrated by the trapezoidal
//! rule.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::Prior;
use crate::error::{Error, Result};
use crate::exact::log_partition_recursive;
use crate::lattice::Lattice;
use crate::math::log_sum_exp;
use crate::model::{sufficient_statistics, ModelSpec};

/// Default relative density allowed on the edge of the evaluated region.
pub const COVERAGE_TOLERANCE: f64 = 1e-8;

/// Normalised density on a tensor grid of one or two axes. Points are
/// stored with the last axis varying fastest. Points that were not
/// evaluated carry `-∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub axes: Vec<Vec<f64>>,
    /// Normalised log-density at every grid point.
    pub log_density: Vec<f64>,
    /// `log ∫ exp(u)` of the unnormalised input `u`.
    pub log_evidence: f64,
}

/// Trapezoid weights of a sorted axis.
pub fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
            let right = if i + 1 < n { axis[i + 1] - axis[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

fn check_axes(axes: &[Vec<f64>]) -> Result<usize> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::InvalidGrid(format!("{} axes; one or two supported", axes.len())));
    }
    for a in axes {
        if a.len() < 2 || a.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("axes need at least two strictly increasing values".into()));
        }
    }
    Ok(axes.iter().map(Vec::len).product())
}

/// Evenly spaced points from `lower` to `upper` inclusive.
pub fn linspace(lower: f64, upper: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| lower + (upper - lower) * i as f64 / (n - 1) as f64).collect()
}

/// Points `i × step` covering `[lower, upper]`. Grids with the same step
/// share points exactly, which lets evaluations be cached across grids.
pub fn lattice_axis(lower: f64, upper: f64, step: f64) -> Vec<f64> {
    let lo = (lower / step).floor() as i64;
    let hi = (upper / step).ceil() as i64;
    (lo..=hi).map(|i| i as f64 * step).collect()
}

/// Rectangular grid specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn axes(&self) -> Vec<Vec<f64>> {
        self.lower.iter().zip(&self.upper).zip(&self.points).map(|((l, u), n)| linspace(*l, *u, *n)).collect()
    }

    /// Box `mode ± n_sd · sd` with `points` per axis.
    pub fn around(mode: &[f64], sd: &[f64], n_sd: f64, points: usize) -> Self {
        Self {
            lower: mode.iter().zip(sd).map(|(m, s)| m - n_sd * s).collect(),
            upper: mode.iter().zip(sd).map(|(m, s)| m + n_sd * s).collect(),
            points: vec![points; mode.len()],
        }
    }
}

impl GridPosterior {
    /// Normalises unnormalised log-values `u` with the trapezoidal rule.
    pub fn from_log_values(axes: Vec<Vec<f64>>, u: Vec<f64>) -> Result<Self> {
        let n = check_axes(&axes)?;
        if u.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: u.len() });
        }
        if u.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidGrid("log-values must be finite or -inf".into()));
        }
        let lw = Self::log_weights(&axes);
        let terms: Vec<f64> = u.iter().zip(&lw).map(|(a, b)| a + b).collect();
        let log_evidence = log_sum_exp(&terms);
        if !log_evidence.is_finite() {
            return Err(Error::InvalidGrid("density vanishes on the whole grid".into()));
        }
        let log_density = u.iter().map(|v| v - log_evidence).collect();
        Ok(Self { axes, log_density, log_evidence })
    }

    /// Uses a normaliser computed elsewhere, e.g. for a density normalised
    /// on its own grid and evaluated on this one.
    pub fn with_log_normalizer(axes: Vec<Vec<f64>>, u: Vec<f64>, log_normalizer: f64) -> Result<Self> {
        let n = check_axes(&axes)?;
        if u.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: u.len() });
        }
        Ok(Self { axes, log_density: u.iter().map(|v| v - log_normalizer).collect(), log_evidence: log_normalizer })
    }

    fn log_weights(axes: &[Vec<f64>]) -> Vec<f64> {
        let ws: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
        match ws.len() {
            1 => ws[0].iter().map(|w| w.ln()).collect(),
            _ => ws[0].iter().flat_map(|a| ws[1].iter().map(move |b| (a * b).ln())).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.log_density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_density.is_empty()
    }

    /// Coordinates of point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        grid_point(&self.axes, idx)
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        self.log_density.iter().map(|v| v.exp()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        Self::log_weights(&self.axes).iter().map(|w| w.exp()).collect()
    }

    /// `∫ p` by the trapezoidal rule.
    pub fn integral(&self) -> f64 {
        self.density().iter().zip(self.weights()).map(|(p, w)| p * w).sum()
    }

    /// Point with the largest density.
    pub fn argmax(&self) -> Vec<f64> {
        let i = (0..self.len()).max_by(|&a, &b| self.log_density[a].total_cmp(&self.log_density[b])).unwrap_or(0);
        self.point(i)
    }

    /// Largest spacing along each axis.
    pub fn steps(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        let d = self.dim();
        let mut m = DVector::zeros(d);
        let z = self.integral();
        for ((lp, w), i) in self.log_density.iter().zip(self.weights()).zip(0..) {
            let pw = lp.exp() * w;
            if pw > 0.0 {
                m += DVector::from_vec(self.point(i)) * pw;
            }
        }
        m / z
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mean = self.mean();
        let z = self.integral();
        let mut c = DMatrix::zeros(d, d);
        for ((lp, w), i) in self.log_density.iter().zip(self.weights()).zip(0..) {
            let pw = lp.exp() * w;
            if pw > 0.0 {
                let v = DVector::from_vec(self.point(i)) - &mean;
                c += &v * v.transpose() * pw;
            }
        }
        c / z
    }

    /// Indices of points on the edge of the evaluated region: finite points
    /// on the outer rows of the grid, or next to a point that `evaluated`
    /// marks as skipped. Points at `-∞` inside the evaluated region lie
    /// outside the support and do not make an edge.
    fn edge_points(&self, evaluated: Option<&[bool]>) -> Vec<usize> {
        let lens: Vec<usize> = self.axes.iter().map(Vec::len).collect();
        let skipped = |i: usize| evaluated.is_some_and(|m| !m[i]);
        (0..self.len())
            .filter(|&i| {
                if !self.log_density[i].is_finite() {
                    return false;
                }
                let idx = unravel(&lens, i);
                (0..lens.len()).any(|ax| {
                    if idx[ax] == 0 || idx[ax] + 1 == lens[ax] {
                        return true;
                    }
                    let mut lo = idx.clone();
                    lo[ax] -= 1;
                    let mut hi = idx.clone();
                    hi[ax] += 1;
                    skipped(ravel(&lens, &lo)) || skipped(ravel(&lens, &hi))
                })
            })
            .collect()
    }

    /// Largest density on the edge of the evaluated region, relative to the
    /// maximum.
    pub fn edge_ratio(&self, evaluated: Option<&[bool]>) -> f64 {
        let max = self.log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.edge_points(evaluated).iter().map(|&i| (self.log_density[i] - max).exp()).fold(0.0, f64::max)
    }

    /// Fails when the density on the edge of the grid exceeds `tol` times
    /// the maximum, suggesting wider bounds.
    pub fn check_coverage(&self, tol: f64) -> Result<()> {
        self.check_coverage_masked(tol, None)
    }

    /// Coverage check for a grid where only points marked in `evaluated`
    /// were computed.
    pub fn check_coverage_masked(&self, tol: f64, evaluated: Option<&[bool]>) -> Result<()> {
        if evaluated.is_some_and(|m| m.len() != self.len()) {
            return Err(Error::DimensionMismatch { expected: self.len(), got: evaluated.map_or(0, <[bool]>::len) });
        }
        let ratio = self.edge_ratio(evaluated);
        if ratio >= tol {
            let axis = self.worst_axis(evaluated);
            let a = &self.axes[axis];
            let half = 0.5 * (a[a.len() - 1] - a[0]);
            return Err(Error::GridTooNarrow { axis, ratio, lower: a[0] - half, upper: a[a.len() - 1] + half });
        }
        Ok(())
    }

    fn worst_axis(&self, evaluated: Option<&[bool]>) -> usize {
        let lens: Vec<usize> = self.axes.iter().map(Vec::len).collect();
        let max = self.log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut worst = (0, f64::NEG_INFINITY);
        for i in self.edge_points(evaluated) {
            let idx = unravel(&lens, i);
            for (ax, (&k, &n)) in idx.iter().zip(&lens).enumerate() {
                if (k == 0 || k + 1 == n) && self.log_density[i] - max > worst.1 {
                    worst = (ax, self.log_density[i] - max);
                }
            }
        }
        worst.0
    }

    /// CSV of grid points and densities, preceded by a `#` line holding a
    /// JSON header.
    pub fn write_csv<W: Write>(&self, out: W, header: &serde_json::Value) -> Result<()> {
        let mut out = out;
        writeln!(out, "# {}", serde_json::to_string(header)?)?;
        let mut w = csv::Writer::from_writer(out);
        let mut cols: Vec<String> = (0..self.dim()).map(|k| format!("theta{k}")).collect();
        cols.extend(["log_density".to_string(), "density".to_string()]);
        w.write_record(&cols)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.point(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.log_density[i].to_string());
            rec.push(self.log_density[i].exp().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn unravel(lens: &[usize], mut i: usize) -> Vec<usize> {
    let mut idx = vec![0; lens.len()];
    for ax in (0..lens.len()).rev() {
        idx[ax] = i % lens[ax];
        i /= lens[ax];
    }
    idx
}

pub(crate) fn ravel(lens: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(lens).fold(0, |acc, (k, n)| acc * n + k)
}

/// Coordinates of point `i` of the tensor grid over `axes`.
pub fn grid_point(axes: &[Vec<f64>], i: usize) -> Vec<f64> {
    let lens: Vec<usize> = axes.iter().map(Vec::len).collect();
    unravel(&lens, i).iter().zip(axes).map(|(k, a)| a[*k]).collect()
}

/// Evaluates `log_target` on every grid point where `include` holds
/// (everywhere when `None`); other points get `-∞`.
pub fn tabulate<F>(axes: &[Vec<f64>], include: Option<&(dyn Fn(&[f64]) -> bool + Sync)>, log_target: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let n = check_axes(axes)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let p = grid_point(axes, i);
            match include {
                Some(f) if !f(&p) => Ok(f64::NEG_INFINITY),
                _ => log_target(&p),
            }
        })
        .collect()
}

/// Evaluates `log_target` at the points where `evaluated` holds.
pub fn tabulate_masked<F>(axes: &[Vec<f64>], evaluated: &[bool], log_target: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let n = check_axes(axes)?;
    if evaluated.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: evaluated.len() });
    }
    (0..n)
        .into_par_iter()
        .map(|i| if evaluated[i] { log_target(&grid_point(axes, i)) } else { Ok(f64::NEG_INFINITY) })
        .collect()
}

/// Memo of `log z(θ)` for one model and lattice size, keyed by the exact
/// bits of `θ`.
#[derive(Debug)]
pub struct LogPartitionCache {
    model: ModelSpec,
    rows: usize,
    cols: usize,
    values: Mutex<HashMap<Vec<u64>, f64>>,
}

impl LogPartitionCache {
    pub fn new(model: ModelSpec, rows: usize, cols: usize) -> Self {
        Self { model, rows, cols, values: Mutex::new(HashMap::new()) }
    }

    pub fn len(&self) -> usize {
        self.values.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn log_partition(&self, theta: &[f64]) -> Result<f64> {
        let key: Vec<u64> = theta.iter().map(|t| t.to_bits()).collect();
        if let Some(v) = self.values.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = log_partition_recursive(theta, self.model, self.rows, self.cols)?;
        self.values.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    /// Appends entries from a CSV written by [`Self::to_csv`]; rows for other
    /// models or sizes are ignored.
    pub fn load_csv(&self, text: &str) -> Result<usize> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let mut added = 0;
        let mut map = self.values.lock().expect("cache lock");
        for rec in rdr.records() {
            let rec = rec?;
            let model: ModelSpec = rec.get(0).unwrap_or("").parse()?;
            let rows: usize = rec.get(1).unwrap_or("").parse().map_err(|_| Error::Parse("cache rows".into()))?;
            let cols: usize = rec.get(2).unwrap_or("").parse().map_err(|_| Error::Parse("cache cols".into()))?;
            if model != self.model || rows != self.rows || cols != self.cols {
                continue;
            }
            let nums: Vec<f64> = rec
                .iter()
                .skip(3)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("cache value '{s}'"))))
                .collect::<Result<_>>()?;
            if nums.len() != self.model.dim() + 1 {
                return Err(Error::Parse("cache row width".into()));
            }
            let (theta, v) = nums.split_at(self.model.dim());
            map.insert(theta.iter().map(|t| t.to_bits()).collect(), v[0]);
            added += 1;
        }
        Ok(added)
    }

    /// Entries sorted by parameter, as CSV.
    pub fn to_csv(&self) -> Result<String> {
        let map = self.values.lock().expect("cache lock");
        let mut keys: Vec<&Vec<u64>> = map.keys().collect();
        keys.sort_by(|a, b| {
            let fa = a.iter().map(|v| f64::from_bits(*v));
            let fb = b.iter().map(|v| f64::from_bits(*v));
            fa.zip(fb).map(|(x, y)| x.total_cmp(&y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["model".to_string(), "rows".into(), "cols".into()];
        header.extend((0..self.model.dim()).map(|k| format!("theta{k}")));
        header.push("log_z".into());
        w.write_record(&header)?;
        for k in keys {
            let mut rec = vec![self.model.to_string(), self.rows.to_string(), self.cols.to_string()];
            rec.extend(k.iter().map(|b| f64::from_bits(*b).to_string()));
            rec.push(map[k].to_string());
            w.write_record(&rec)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
    }
}

/// `log p(θ | y)` up to the evidence: `θᵀs(y) − log z(θ) + log p(θ)`.
pub fn exact_log_posterior_kernel(
    theta: &[f64],
    y: &Lattice,
    model: ModelSpec,
    prior: &Prior,
    cache: Option<&LogPartitionCache>,
) -> Result<f64> {
    model.check_params(theta)?;
    let lp = prior.log_density(theta)?;
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    let s = sufficient_statistics(y, model).as_f64();
    let lz = match cache {
        Some(c) => c.log_partition(theta)?,
        None => log_partition_recursive(theta, model, y.rows(), y.cols())?,
    };
    Ok(theta.iter().zip(&s).map(|(t, v)| t * v).sum::<f64>() - lz + lp)
}

/// Exact posterior on a grid: `q(y | θ) / z(θ) × p(θ)` normalised by the
/// trapezoidal rule, whose total is the evidence `p(y)`. Fails when the
/// grid misses a visible part of the mass.
pub fn grid_posterior(y: &Lattice, model: ModelSpec, prior: &Prior, spec: &GridSpec) -> Result<GridPosterior> {
    let axes = spec.axes();
    if axes.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: axes.len() });
    }
    let u = tabulate(&axes, None, |t| exact_log_posterior_kernel(t, y, model, prior, None))?;
    let g = GridPosterior::from_log_values(axes, u)?;
    g.check_coverage(COVERAGE_TOLERANCE)?;
    Ok(g)
}

/// How [`laplace_grid`] lays out its points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaplaceGridConfig {
    /// Points of one-dimensional grids.
    pub points: usize,
    /// Half-width of one-dimensional grids in standard deviations.
    pub n_sd: f64,
    /// Two-dimensional grids: points per conditional standard deviation.
    pub resolution: f64,
    /// Two-dimensional grids keep points whose Gaussian log-density lies
    /// within this drop of the mode.
    pub log_drop: f64,
    /// Widening attempts after a failed coverage check.
    pub max_widen: usize,
    pub widen_factor: f64,
}

impl Default for LaplaceGridConfig {
    fn default() -> Self {
        Self { points: 200, n_sd: 7.0, resolution: 1.5, log_drop: 22.0, max_widen: 6, widen_factor: 1.5 }
    }
}

/// Smallest widening of `prev` that also contains `observed`, scaled by
/// `factor²`: eigenvalues of `observed` relative to `prev` are raised to at
/// least one.
fn widened(prev: &DMatrix<f64>, observed: &DMatrix<f64>, factor: f64) -> Result<DMatrix<f64>> {
    let l = prev.clone().cholesky().ok_or_else(|| Error::Singular("grid covariance".into()))?.l();
    let li = l.clone().try_inverse().ok_or_else(|| Error::Singular("grid covariance".into()))?;
    let relative = crate::math::symmetrize(&(&li * observed * li.transpose()));
    let eig = relative.symmetric_eigen();
    let lam = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| if v.is_finite() { v.max(1.0) } else { 1.0 }));
    let m = &eig.eigenvectors * lam * eig.eigenvectors.transpose();
    Ok(crate::math::symmetrize(&(&l * m * l.transpose())) * (factor * factor))
}

/// Grid posterior of `log_target` laid out from a Gaussian guess
/// `N(mode, cov)`: a uniform axis over `mode ± n_sd·sd` for `d = 1`, an
/// elliptical patch of a regular lattice for `d = 2`. After a failed
/// coverage check the guess is widened to contain the moments found on the
/// grid, so the point count stays roughly constant.
pub fn laplace_grid<F>(log_target: F, mode: &[f64], cov: &DMatrix<f64>, config: &LaplaceGridConfig) -> Result<GridPosterior>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let d = crate::math::check_square(cov)?;
    if d != mode.len() || d > 2 {
        return Err(Error::DimensionMismatch { expected: mode.len(), got: d });
    }
    let mut shape = cov.clone();
    let mut last = None;
    for _ in 0..=config.max_widen {
        let prec = shape.clone().try_inverse().ok_or_else(|| Error::Singular("grid covariance".into()))?;
        if (0..d).any(|i| !(shape[(i, i)] > 0.0) || !(prec[(i, i)] > 0.0)) {
            return Err(Error::Singular("grid covariance is not positive definite".into()));
        }
        let (axes, evaluated) = if d == 1 {
            let half = config.n_sd * shape[(0, 0)].sqrt();
            let axes = vec![linspace(mode[0] - half, mode[0] + half, config.points)];
            let n = axes[0].len();
            (axes, vec![true; n])
        } else {
            let r2 = 2.0 * config.log_drop;
            let axes: Vec<Vec<f64>> = (0..2)
                .map(|i| {
                    let step = 1.0 / (prec[(i, i)].sqrt() * config.resolution);
                    let half = (r2 * shape[(i, i)]).sqrt() + step;
                    lattice_axis(mode[i] - half, mode[i] + half, step)
                })
                .collect();
            let n = axes[0].len() * axes[1].len();
            let evaluated = (0..n)
                .map(|i| {
                    let t = grid_point(&axes, i);
                    let v = DVector::from_vec(vec![t[0] - mode[0], t[1] - mode[1]]);
                    (v.transpose() * &prec * &v)[(0, 0)] <= r2
                })
                .collect();
            (axes, evaluated)
        };
        let g = GridPosterior::from_log_values(axes.clone(), tabulate_masked(&axes, &evaluated, &log_target)?)?;
        match g.check_coverage_masked(COVERAGE_TOLERANCE, Some(&evaluated)) {
            Ok(()) => return Ok(g),
            Err(e) => {
                shape = widened(&shape, &g.covariance(), config.widen_factor)?;
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}
