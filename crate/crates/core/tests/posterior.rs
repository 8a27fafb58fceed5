use nalgebra::DMatrix;

use gibbs_cl::calibrate::{bfgs_map, BfgsConfig, Prior};
use gibbs_cl::exact::exact_sample;
use gibbs_cl::posterior::{
    evidence_importance_sampling, exact_log_posterior_kernel, grid_posterior, posterior_covariance, rwm_sample,
    scaled_proposal, GridPosterior, GridSpec, LogPartitionCache,
};
use gibbs_cl::rng::stream;
use gibbs_cl::{enumerate_blocks, Lattice, ModelSpec};

const MODEL: ModelSpec = ModelSpec::IsingIsotropic;
const SIDE: usize = 10;

fn observed(seed: u64) -> Lattice {
    exact_sample(&[0.4], MODEL, SIDE, SIDE, &mut stream(seed, &[1])).unwrap()
}

fn reference(y: &Lattice, prior: &Prior) -> GridPosterior {
    grid_posterior(y, MODEL, prior, &GridSpec { lower: vec![-0.2], upper: vec![1.0], points: vec![801] }).unwrap()
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Standard error of a chain mean from 20 batch means.
fn batch_mean_se(x: &[f64]) -> f64 {
    let size = x.len() / 20;
    let means: Vec<f64> = x.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    (variance(&means) / means.len() as f64).sqrt()
}

#[test]
fn importance_sampling_matches_trapezoid_evidence() {
    let prior = Prior::default_uniform(1);
    let y = observed(3);
    let grid = reference(&y, &prior);
    let cov = grid.covariance();
    let cache = LogPartitionCache::new(MODEL, SIDE, SIDE);
    let e = evidence_importance_sampling(&y, MODEL, &prior, grid.mean().as_slice(), &cov, 2000, Some(&cache), &mut stream(9, &[]))
        .unwrap();
    let diff = (e.log_evidence - grid.log_evidence).abs();
    assert!(diff < 3.0 * e.log_standard_error, "IS {} vs grid {} (se {})", e.log_evidence, grid.log_evidence, e.log_standard_error);
    assert!(e.effective_sample_size > 1000.0);
}

#[test]
fn doubling_points_halves_evidence_variance() {
    let prior = Prior::default_uniform(1);
    let y = observed(4);
    let grid = reference(&y, &prior);
    let cov = grid.covariance() * 1.5;
    let mean = grid.mean();
    let run = |n: usize, rep: u64| {
        evidence_importance_sampling(&y, MODEL, &prior, mean.as_slice(), &cov, n, None, &mut stream(rep, &[n as u64]))
            .unwrap()
            .log_evidence
    };
    let small: Vec<f64> = (0..50).map(|r| run(200, r)).collect();
    let large: Vec<f64> = (0..50).map(|r| run(400, r)).collect();
    let ratio = variance(&large) / variance(&small);
    assert!((0.3..=0.7).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn random_walk_matches_grid_posterior() {
    let prior = Prior::default_uniform(1);
    let y = observed(5);
    let grid = reference(&y, &prior);
    let (gm, gv) = (grid.mean()[0], grid.covariance()[(0, 0)]);
    let kernel = |t: &[f64]| exact_log_posterior_kernel(t, &y, MODEL, &prior, None);
    let proposal = scaled_proposal(&DMatrix::from_element(1, 1, gv));
    let mut variances = Vec::new();
    for seed in 0..5 {
        let chain = rwm_sample(kernel, &[gm], 7000, 2000, &proposal, &mut stream(seed, &[6])).unwrap();
        assert_eq!(chain.len(), 5000);
        assert!(chain.acceptance_rate > 0.2 && chain.acceptance_rate < 0.8);
        let x: Vec<f64> = chain.samples.iter().map(|s| s[0]).collect();
        let se = batch_mean_se(&x);
        assert!((chain.mean()[0] - gm).abs() < 3.0 * se, "chain mean {} grid mean {gm} se {se}", chain.mean()[0]);
        variances.push(posterior_covariance(&chain).unwrap()[(0, 0)]);
    }
    let avg = variances.iter().sum::<f64>() / 5.0;
    assert!((avg / gv - 1.0).abs() < 0.1, "chain variance {avg} grid variance {gv}");
}

#[test]
fn grid_argmax_agrees_with_exact_mode() {
    let prior = Prior::default_uniform(1);
    let y = observed(6);
    let blocks = enumerate_blocks(SIDE, SIDE, 4).unwrap();
    let config = BfgsConfig { exact_moments: true, exact_tolerance: 1e-7, ..BfgsConfig::default() };
    let maps = bfgs_map(&y, MODEL, &blocks, &prior, &config, &mut stream(1, &[])).unwrap();
    let grid = reference(&y, &prior);
    let step = grid.steps()[0];
    assert!((grid.argmax()[0] - maps.theta[0]).abs() <= step, "argmax {:?} mode {:?}", grid.argmax(), maps.theta);
}
