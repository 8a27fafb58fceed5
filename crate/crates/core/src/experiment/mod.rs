//! Replicated simulation studies comparing approximate posteriors with the
//! exact one.

mod config;
mod replicate;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, Profile, TrueCovariance};
pub use replicate::{
    replicate_seed, run_replicate, simulate_replicate, MethodMetrics, ReplicateOutput, ReplicateRecord, Timings,
};

use crate::error::{Error, Result};
use crate::posterior::GridPosterior;

/// Direction of the divergence reported as `kl`.
pub const KL_DIRECTION: &str = "KL(true || approx)";

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Minimum, quartiles and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyRecords);
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub replicates: usize,
    /// Mean of the squared relative variance errors.
    pub rmse: f64,
    /// Mean divergence from the reference posterior.
    pub akld: f64,
    pub variance_ratio: Quantiles,
    pub kl: Quantiles,
}

/// Per-method metrics over the successful replicates.
pub fn summarize(records: &[ReplicateRecord]) -> Result<Vec<MethodSummary>> {
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let first = ok.first().ok_or(Error::EmptyRecords)?;
    first
        .methods
        .iter()
        .map(|m| {
            let rows: Vec<&MethodMetrics> = ok.iter().filter_map(|r| r.method(&m.method)).collect();
            let n = rows.len() as f64;
            let ratios: Vec<f64> = rows.iter().map(|r| r.variance_ratio).collect();
            let kls: Vec<f64> = rows.iter().map(|r| r.kl).collect();
            Ok(MethodSummary {
                method: m.method.clone(),
                replicates: rows.len(),
                rmse: rows.iter().map(|r| r.squared_error).sum::<f64>() / n,
                akld: kls.iter().sum::<f64>() / n,
                variance_ratio: Quantiles::of(&ratios)?,
                kl: Quantiles::of(&kls)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub version: String,
    pub kl_direction: String,
    pub config: ExperimentConfig,
    pub replicate_seeds: Vec<u64>,
    pub succeeded: usize,
    pub failed: Vec<(usize, String)>,
    pub methods: Vec<MethodSummary>,
    /// Median magnitude weight per option, 0 being the scalar weight.
    pub median_weights: Vec<(u8, f64)>,
}

impl ExperimentSummary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn from_records(config: &ExperimentConfig, records: &[ReplicateRecord]) -> Result<Self> {
        let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.is_ok()).collect();
        let mut median_weights = Vec::new();
        if ok.iter().all(|r| r.scalar_weight.is_some()) && !ok.is_empty() {
            let v: Vec<f64> = ok.iter().filter_map(|r| r.scalar_weight).collect();
            median_weights.push((0, Quantiles::of(&v)?.median));
        }
        for (i, o) in crate::calibrate::WEIGHT_OPTIONS.iter().enumerate() {
            let v: Vec<f64> = ok.iter().filter_map(|r| r.weights.get(i).copied()).collect();
            if !v.is_empty() {
                median_weights.push((*o, Quantiles::of(&v)?.median));
            }
        }
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            kl_direction: KL_DIRECTION.into(),
            config: config.clone(),
            replicate_seeds: records.iter().map(|r| r.seed).collect(),
            succeeded: ok.len(),
            failed: records.iter().filter_map(|r| r.error.clone().map(|e| (r.replicate, e))).collect(),
            methods: summarize(records)?,
            median_weights,
        })
    }

    /// Plain-text table of the per-method metrics.
    pub fn table(&self) -> String {
        let mut s = format!(
            "experiment {} ({}), {} of {} replicates succeeded\n{:<16} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            self.config.experiment,
            self.config.profile,
            self.succeeded,
            self.replicate_seeds.len(),
            "method",
            "RMSE",
            "AKLD",
            "ratio q1",
            "median",
            "ratio q3"
        );
        for m in &self.methods {
            s += &format!(
                "{:<16} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                m.method, m.rmse, m.akld, m.variance_ratio.q1, m.variance_ratio.median, m.variance_ratio.q3
            );
        }
        for (o, w) in &self.median_weights {
            s += &format!("median weight option {o}: {w:.4}\n");
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// Column names of `replicates.csv`. Vector-valued fields are written as
/// `;`-separated lists; method columns are `<method>_ratio`,
/// `<method>_sq_error` and `<method>_kl`.
pub fn csv_header(methods: &[String]) -> Vec<String> {
    let mut h: Vec<String> = [
        "replicate",
        "seed",
        "status",
        "statistics",
        "theta_star",
        "theta_cl",
        "iterations",
        "iterations_cl",
        "scalar_weight",
        "w1",
        "w2",
        "w3",
        "w4",
        "w5",
        "curvature_w",
        "true_mean",
        "true_covariance",
        "mcmc_acceptance",
        "log_evidence_grid",
        "log_evidence_is",
        "log_evidence_is_se",
        "grid_points",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for m in methods {
        h.extend([format!("{m}_ratio"), format!("{m}_sq_error"), format!("{m}_kl")]);
    }
    h
}

fn csv_row(r: &ReplicateRecord, methods: &[String]) -> Vec<String> {
    let mut row = vec![
        r.replicate.to_string(),
        r.seed.to_string(),
        r.error.clone().unwrap_or_else(|| "ok".into()),
        r.statistics.iter().map(i64::to_string).collect::<Vec<_>>().join(";"),
        join(&r.theta_star),
        join(&r.theta_cl),
        r.iterations.to_string(),
        r.iterations_cl.to_string(),
        opt(r.scalar_weight),
    ];
    row.extend((0..5).map(|i| opt(r.weights.get(i).copied())));
    row.extend([
        r.curvature.as_deref().map(join).unwrap_or_default(),
        join(&r.true_mean),
        join(&r.true_covariance),
        opt(r.mcmc_acceptance),
        opt(r.log_evidence_grid),
        opt(r.log_evidence_is),
        opt(r.log_evidence_is_se),
        r.grid_points.to_string(),
    ]);
    for m in methods {
        match r.method(m) {
            Some(x) => row.extend([x.variance_ratio.to_string(), x.squared_error.to_string(), x.kl.to_string()]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
    }
    row
}

pub fn write_replicates_csv(path: &Path, records: &[ReplicateRecord], methods: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(methods))?;
    for r in records {
        w.write_record(csv_row(r, methods))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv(path: &Path, records: &[ReplicateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["replicate", "simulate", "map", "covariance", "truth", "approximations", "total"])?;
    for r in records {
        let t = &r.timings;
        w.write_record(
            std::iter::once(r.replicate.to_string())
                .chain([t.simulate, t.map, t.covariance, t.truth, t.approximations, t.total].iter().map(|v| format!("{v:.4}"))),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the reference posterior and every approximation evaluated on the
/// reference grid, one column of log-densities per posterior.
pub fn write_posterior_grid_csv(
    path: &Path,
    truth: &GridPosterior,
    approx: &[(String, GridPosterior)],
    header: &serde_json::Value,
) -> Result<()> {
    use std::io::Write;
    let mut f = fs::File::create(path)?;
    writeln!(f, "# {}", serde_json::to_string(header)?)?;
    let mut w = csv::Writer::from_writer(f);
    let mut cols: Vec<String> = (0..truth.dim()).map(|k| format!("theta{k}")).collect();
    cols.push("log_true".into());
    cols.extend(approx.iter().map(|(n, _)| format!("log_{n}")));
    w.write_record(&cols)?;
    for i in 0..truth.len() {
        if !truth.log_density[i].is_finite() {
            continue;
        }
        let mut row: Vec<String> = truth.point(i).iter().map(f64::to_string).collect();
        row.push(truth.log_density[i].to_string());
        row.extend(approx.iter().map(|(_, g)| g.log_density[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StoredReplicate {
    fingerprint: String,
    record: ReplicateRecord,
}

fn replicate_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("replicates").join(format!("replicate_{index:04}.json"))
}

/// Loads the stored record of replicate `index` if it was produced by the
/// same configuration.
fn load_replicate(dir: &Path, index: usize, fingerprint: &str) -> Option<ReplicateRecord> {
    let text = fs::read_to_string(replicate_path(dir, index)).ok()?;
    let stored: StoredReplicate = serde_json::from_str(&text).ok()?;
    (stored.fingerprint == fingerprint && stored.record.replicate == index).then_some(stored.record)
}

/// Reads every stored replicate under `dir`, in index order.
pub fn load_records(dir: &Path) -> Result<Vec<ReplicateRecord>> {
    let mut records = Vec::new();
    let rd = fs::read_dir(dir.join("replicates"))?;
    for e in rd {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "json") {
            let stored: StoredReplicate = serde_json::from_str(&fs::read_to_string(&p)?)?;
            records.push(stored.record);
        }
    }
    records.sort_by_key(|r| r.replicate);
    Ok(records)
}

/// Stored records of replicates `0..config.replicates` produced by `config`.
pub fn stored_records(config: &ExperimentConfig) -> Result<Vec<ReplicateRecord>> {
    let fingerprint = config.fingerprint()?;
    (0..config.replicates)
        .map(|i| {
            load_replicate(&config.out, i, &fingerprint)
                .ok_or_else(|| Error::Config(format!("replicate {i} is missing or was produced by another configuration")))
        })
        .collect()
}

/// Runs every replicate (reusing stored ones), then writes `config.toml`,
/// `replicates.csv`, `timings.csv` and `summary.json` into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let dir = &config.out;
    fs::create_dir_all(dir.join("replicates"))?;
    if config.save_grids {
        fs::create_dir_all(dir.join("grids"))?;
    }
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    let fingerprint = config.fingerprint()?;
    let methods = config.methods();
    let records: Vec<ReplicateRecord> = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            if let Some(r) = load_replicate(dir, i, &fingerprint) {
                if !config.save_grids || dir.join("grids").join(format!("replicate_{i:04}.csv")).exists() {
                    return Ok(r);
                }
            }
            let out = run_replicate(config, i);
            if let Some((truth, approx)) = &out.grids {
                let header = serde_json::json!({
                    "replicate": i,
                    "seed": out.record.seed,
                    "experiment": config.experiment,
                    "model": config.model.to_string(),
                    "log_evidence": truth.log_evidence,
                    "kl_direction": KL_DIRECTION,
                });
                write_posterior_grid_csv(&dir.join("grids").join(format!("replicate_{i:04}.csv")), truth, approx, &header)?;
            }
            let stored = StoredReplicate { fingerprint: fingerprint.clone(), record: out.record };
            fs::write(replicate_path(dir, i), serde_json::to_string_pretty(&stored)?)?;
            Ok(stored.record)
        })
        .collect::<Result<_>>()?;
    write_replicates_csv(&dir.join("replicates.csv"), &records, &methods)?;
    write_timings_csv(&dir.join("timings.csv"), &records)?;
    let summary = ExperimentSummary::from_records(config, &records)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
