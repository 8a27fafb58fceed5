use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gibbs_cl::calibrate::{calibrate, BfgsConfig, CalibrationConfig, WEIGHT_OPTIONS};
use gibbs_cl::exact::exact_sample;
use gibbs_cl::experiment::{run_experiment, stored_records, ExperimentConfig, ExperimentSummary, Profile};
use gibbs_cl::rng::stream;
use gibbs_cl::{Error, Lattice, ModelSpec, Result};

#[derive(Parser)]
#[command(name = "gibbs-cl", version, about = "Composite-likelihood calibration for Ising and autologistic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a lattice exactly from the model.
    Simulate {
        #[arg(long, default_value = "ising-isotropic")]
        model: ModelSpec,
        /// Comma-separated parameter vector.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        theta: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        rows: usize,
        #[arg(long, default_value_t = 16)]
        cols: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file; `.csv` selects the CSV form. Prints text otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate both modes and every adjustment for an observed lattice.
    Calibrate {
        /// Lattice file, text grid or `.csv`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "ising-isotropic")]
        model: ModelSpec,
        #[arg(long, default_value_t = 4)]
        block_side: usize,
        #[arg(long, default_value_t = 100)]
        gradient_draws: usize,
        #[arg(long, default_value_t = 50_000)]
        covariance_draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// JSON report destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replicated experiment.
    Experiment {
        #[arg(long, default_value_t = 1)]
        experiment: u8,
        #[arg(long, default_value = "quick")]
        profile: Profile,
        /// TOML configuration; overrides the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Magnitude weight option reported separately: 1 to 5 or `all`.
        #[arg(long)]
        weight_option: Option<String>,
        /// Also write each replicate's posterior grids.
        #[arg(long)]
        save_grids: bool,
        /// Print the resolved configuration as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Summarise the stored replicates of an experiment directory.
    Metrics {
        #[arg(long)]
        out: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn read_lattice(path: &Path) -> Result<Lattice> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        Lattice::from_csv(&text)
    } else {
        Lattice::from_text(&text)
    }
}

fn parse_weight_options(s: &str) -> Result<Vec<u8>> {
    if s == "all" {
        return Ok(WEIGHT_OPTIONS.to_vec());
    }
    let o: u8 = s.parse().map_err(|_| Error::Parse(format!("weight option '{s}'")))?;
    if !WEIGHT_OPTIONS.contains(&o) {
        return Err(Error::UnknownWeightOption(o));
    }
    Ok(vec![o])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, theta, rows, cols, seed, out } => {
            let y = exact_sample(&theta, model, rows, cols, &mut stream(seed, &[]))?;
            match out {
                Some(p) if p.extension().is_some_and(|e| e == "csv") => fs::write(p, y.to_csv())?,
                Some(p) => fs::write(p, y.to_text())?,
                None => print!("{}", y.to_text()),
            }
        }
        Command::Calibrate { input, model, block_side, gradient_draws, covariance_draws, seed, out } => {
            let y = read_lattice(&input)?;
            let config = CalibrationConfig {
                block_side,
                covariance_draws,
                bfgs: BfgsConfig { gradient_draws, ..BfgsConfig::default() },
                prior: None,
            };
            let report = calibrate(&y, model, &config, seed)?.to_json()?;
            match out {
                Some(p) => fs::write(p, report)?,
                None => println!("{report}"),
            }
        }
        Command::Experiment {
            experiment,
            profile,
            config,
            replicates,
            seed,
            out,
            weight_option,
            save_grids,
            print_config,
        } => {
            let mut c = match config {
                Some(p) => ExperimentConfig::from_toml(&fs::read_to_string(p)?)?,
                None => ExperimentConfig::preset(experiment, profile)?,
            };
            if let Some(n) = replicates {
                c.replicates = n;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(o) = out {
                c.out = o;
            }
            if let Some(w) = weight_option {
                c.weight_options = parse_weight_options(&w)?;
            }
            c.save_grids |= save_grids;
            c.validate()?;
            if print_config {
                print!("{}", c.to_toml()?);
                return Ok(());
            }
            let summary = run_experiment(&c)?;
            print!("{}", summary.table());
            eprintln!("results in {}", c.out.display());
        }
        Command::Metrics { out, json } => {
            let mut config = ExperimentConfig::from_toml(&fs::read_to_string(out.join("config.toml"))?)?;
            config.out = out;
            let records = stored_records(&config)?;
            let summary = ExperimentSummary::from_records(&config, &records)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", summary.table());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
