//! Experiment configuration and its presets.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibrate::{BfgsConfig, CalibrationConfig, Prior, WEIGHT_OPTIONS};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::posterior::LaplaceGridConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Replicate and draw counts of the original study.
    Paper,
    /// Desk-scale counts.
    Quick,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "quick" => Ok(Profile::Quick),
            other => Err(Error::Parse(format!("unknown profile '{other}'"))),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Quick => "quick",
        })
    }
}

/// Source of the reference posterior covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrueCovariance {
    /// Moments of the exact grid posterior.
    Grid,
    /// Random-walk Metropolis on the exact posterior.
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// 1: scalar weight on the isotropic Ising model; 2: the five matrix
    /// weights; 3: the curvature adjustment.
    pub experiment: u8,
    pub profile: Profile,
    pub model: ModelSpec,
    pub theta: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Magnitude weights reported as separate methods (experiment 2).
    pub weight_options: Vec<u8>,
    pub true_covariance: TrueCovariance,
    pub mcmc_iterations: usize,
    pub mcmc_burn_in: usize,
    /// Importance-sampling points for the evidence.
    pub evidence_points: usize,
    /// Proposal covariance for the evidence is the posterior covariance
    /// times this factor.
    pub evidence_inflation: f64,
    pub save_grids: bool,
    pub out: PathBuf,
    pub calibration: CalibrationConfig,
    pub grid: LaplaceGridConfig,
}

impl ExperimentConfig {
    pub fn preset(experiment: u8, profile: Profile) -> Result<Self> {
        let (model, theta) = match experiment {
            1 => (ModelSpec::IsingIsotropic, vec![0.4]),
            2 => (ModelSpec::IsingAnisotropic, vec![0.3, 0.5]),
            3 => (ModelSpec::Autologistic, vec![0.05, 0.4]),
            other => return Err(Error::Config(format!("unknown experiment {other}; expected 1, 2 or 3"))),
        };
        let paper = profile == Profile::Paper;
        Ok(Self {
            experiment,
            profile,
            model,
            theta,
            rows: 16,
            cols: 16,
            replicates: if paper { 100 } else { 20 },
            seed: 20_140_613,
            weight_options: WEIGHT_OPTIONS.to_vec(),
            true_covariance: if paper && experiment != 1 { TrueCovariance::Mcmc } else { TrueCovariance::Grid },
            mcmc_iterations: 7000,
            mcmc_burn_in: 2000,
            evidence_points: if paper { 1000 } else { 200 },
            evidence_inflation: 1.5,
            save_grids: false,
            out: PathBuf::from(format!("out/exp{experiment}-{profile}")),
            calibration: CalibrationConfig {
                block_side: 4,
                covariance_draws: if paper { 50_000 } else { 10_000 },
                bfgs: BfgsConfig { gradient_draws: 100, ..BfgsConfig::default() },
                prior: Some(Prior::default_uniform(model.dim())),
            },
            grid: LaplaceGridConfig::default(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn prior(&self) -> Prior {
        self.calibration.prior.clone().unwrap_or_else(|| Prior::default_uniform(self.model.dim()))
    }

    /// Method names in output order.
    pub fn methods(&self) -> Vec<String> {
        match self.experiment {
            1 => vec!["pseudo".into(), "cl_unadjusted".into(), "cl_calibrated".into()],
            2 => std::iter::once("cl_unadjusted".to_string())
                .chain(self.weight_options.iter().map(|o| format!("cl_w{o}")))
                .collect(),
            _ => vec!["cl_unadjusted".into(), "cl_curvature".into()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.experiment) {
            return bad(format!("unknown experiment {}", self.experiment));
        }
        self.model.check_params(&self.theta)?;
        if self.experiment == 1 && self.model.dim() != 1 {
            return bad("experiment 1 needs a one-parameter model".into());
        }
        if self.model.dim() > 2 {
            return bad("grid posteriors support at most two parameters".into());
        }
        let counts = [
            ("rows", self.rows),
            ("cols", self.cols),
            ("replicates", self.replicates),
            ("mcmc_iterations", self.mcmc_iterations),
            ("evidence_points", self.evidence_points),
            ("covariance_draws", self.calibration.covariance_draws),
            ("gradient_draws", self.calibration.bfgs.gradient_draws),
            ("block_side", self.calibration.block_side),
            ("grid.points", self.grid.points),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if self.mcmc_burn_in >= self.mcmc_iterations {
            return bad("mcmc_burn_in must be below mcmc_iterations".into());
        }
        if self.calibration.block_side > self.rows.min(self.cols) {
            return bad("block_side exceeds the lattice".into());
        }
        if self.experiment == 2 && self.weight_options.is_empty() {
            return bad("experiment 2 needs at least one weight option".into());
        }
        if let Some(o) = self.weight_options.iter().find(|o| !WEIGHT_OPTIONS.contains(o)) {
            return Err(Error::UnknownWeightOption(*o));
        }
        if !(self.evidence_inflation > 0.0) || !(self.grid.resolution > 0.0) || !(self.grid.n_sd > 0.0) {
            return bad("grid and evidence scales must be positive".into());
        }
        let prior = self.prior();
        prior.validate()?;
        if prior.dim() != self.model.dim() {
            return Err(Error::DimensionMismatch { expected: self.model.dim(), got: prior.dim() });
        }
        Ok(())
    }

    /// Everything that influences a replicate's record. Resumed runs reuse
    /// a stored record only if this matches.
    pub fn fingerprint(&self) -> Result<String> {
        let mut c = self.clone();
        c.replicates = 0;
        c.out = PathBuf::new();
        c.save_grids = false;
        Ok(serde_json::to_string(&c)?)
    }
}
