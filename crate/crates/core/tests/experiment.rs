use std::fs;
use std::path::Path;
use std::time::SystemTime;

use gibbs_cl::experiment::{load_records, run_experiment, run_replicate, ExperimentConfig, Profile, ReplicateRecord};

fn small(experiment: u8, out: &Path, replicates: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(experiment, Profile::Quick).unwrap();
    c.rows = 8;
    c.cols = 8;
    c.calibration.block_side = 3;
    c.calibration.covariance_draws = 2000;
    c.evidence_points = 100;
    c.replicates = replicates;
    c.out = out.to_path_buf();
    c
}

fn without_timings(mut r: ReplicateRecord) -> ReplicateRecord {
    r.timings = Default::default();
    r
}

fn modified(p: &Path) -> SystemTime {
    fs::metadata(p).unwrap().modified().unwrap()
}

#[test]
fn replicates_do_not_depend_on_the_subset_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = small(1, &dir.path().join("full"), 3);
    run_experiment(&full).unwrap();
    let part = small(1, &dir.path().join("part"), 2);
    run_experiment(&part).unwrap();
    let a: Vec<_> = load_records(&full.out).unwrap().into_iter().map(without_timings).collect();
    let b: Vec<_> = load_records(&part.out).unwrap().into_iter().map(without_timings).collect();
    assert_eq!(a.len(), 3);
    assert_eq!(&a[..2], &b[..]);
    assert!(a.iter().all(|r| r.is_ok()), "{:?}", a.iter().map(|r| &r.error).collect::<Vec<_>>());
    assert_eq!(without_timings(run_replicate(&full, 2).record), a[2]);
    let csv = |c: &ExperimentConfig| fs::read_to_string(c.out.join("replicates.csv")).unwrap();
    let (fa, fb) = (csv(&full), csv(&part));
    assert!(fa.starts_with(&fb), "leading rows differ");
}

#[test]
fn reruns_resume_completed_replicates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let c = small(2, &out, 2);
    let first = run_experiment(&c).unwrap();
    let stored = out.join("replicates").join("replicate_0000.json");
    let stamp = modified(&stored);
    let bytes = fs::read(&stored).unwrap();

    let mut more = c.clone();
    more.replicates = 3;
    let second = run_experiment(&more).unwrap();
    assert_eq!(modified(&stored), stamp);
    assert_eq!(fs::read(&stored).unwrap(), bytes);
    assert_eq!(second.replicate_seeds[..2], first.replicate_seeds[..]);
    assert_eq!(load_records(&out).unwrap().len(), 3);

    // a different configuration must not reuse stored records
    let mut other = c.clone();
    other.seed += 1;
    run_experiment(&other).unwrap();
    assert_ne!(fs::read(&stored).unwrap(), bytes);
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(3, dir.path(), 1);
    c.save_grids = true;
    let summary = run_experiment(&c).unwrap();
    assert_eq!(summary.methods.len(), 2);
    for f in ["config.toml", "replicates.csv", "timings.csv", "summary.json", "grids/replicate_0000.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let back = ExperimentConfig::from_toml(&fs::read_to_string(dir.path().join("config.toml")).unwrap()).unwrap();
    assert_eq!(back, c);
    let csv = fs::read_to_string(dir.path().join("replicates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(!csv.contains("timing"));
    let grid = fs::read_to_string(dir.path().join("grids/replicate_0000.csv")).unwrap();
    assert!(grid.starts_with("# {"));
    let r = &load_records(dir.path()).unwrap()[0];
    assert!(r.is_ok(), "{:?}", r.error);
    assert!(r.methods.iter().all(|m| m.kl >= -1e-10));
    assert!(r.curvature.is_some());
}
