//! Scenario runner binary. Each subcommand loads a JSON configuration,
//! re-validates it, runs the scenario with all randomness derived from one
//! master seed, writes its data files plus a manifest into the output
//! directory, and exits 0. Configuration errors exit 2 and runtime errors
//! exit 3, either way with one JSON object on stderr.

mod config;
mod errors;
mod scenarios;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigFile, ScenarioKind};
use crate::errors::{CliError, CliResult};

/// Scenario runner for the hard-sphere kinetic laboratory.
#[derive(Parser)]
#[command(name = "enskog-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Particle dynamics: event-driven hard spheres or the smooth-potential hybrid
    Simulate(RunArgs),
    /// Space-homogeneous kinetic relaxation on a velocity grid
    Kinetic(RunArgs),
    /// Mollified-ensemble width sweep: coherence, centroid errors, factorization
    Blobs(RunArgs),
    /// Forward/backward round trips: particle, smooth-field, or blob ensemble
    Reversal(RunArgs),
    /// Pointwise collision-operator and mean-field scans
    Stscan(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override the seed given in the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel scans; results are identical for any count
    #[arg(long)]
    threads: Option<usize>,
}

/// Run record written alongside the outputs: tool version, effective seed
/// and output directory, wall time, the files produced, and an echo of the
/// configuration as parsed.
#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    scenario: &'static str,
    seed: u64,
    out: String,
    wall_seconds: f64,
    outputs: &'a [String],
    config: &'a ConfigFile,
}

fn main() {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (ScenarioKind::Simulate, a),
        Command::Kinetic(a) => (ScenarioKind::Kinetic, a),
        Command::Blobs(a) => (ScenarioKind::Blobs, a),
        Command::Reversal(a) => (ScenarioKind::Reversal, a),
        Command::Stscan(a) => (ScenarioKind::Stscan, a),
    };
    if let Err(e) = run(kind, &args) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}

fn run(kind: ScenarioKind, args: &RunArgs) -> CliResult<()> {
    let threads = args.threads.unwrap_or(1);
    if threads == 0 {
        return Err(CliError::Config("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;

    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let file: ConfigFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
    if file.scenario != kind {
        return Err(CliError::Config(format!(
            "subcommand {} does not match scenario {} in the config",
            kind.name(),
            file.scenario.name()
        )));
    }
    let seed = args.seed.unwrap_or(file.seed);
    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| {
        CliError::Runtime(format!("cannot create output directory {}: {e}", out.display()))
    })?;

    let started = Instant::now();
    let outputs = dispatch(kind, &file, seed, &out)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        scenario: kind.name(),
        seed,
        out: out.display().to_string(),
        wall_seconds: started.elapsed().as_secs_f64(),
        outputs: &outputs,
        config: &file,
    };
    enskog_core::write_json_pretty(out.join("manifest.json"), &manifest)?;
    Ok(())
}

fn dispatch(kind: ScenarioKind, file: &ConfigFile, seed: u64, out: &Path) -> CliResult<Vec<String>> {
    match kind {
        ScenarioKind::Simulate => {
            scenarios::simulate::run(&parse_params::<config::SimulateParams>(file)?, seed, out)
        }
        ScenarioKind::Kinetic => {
            scenarios::kinetic::run(&parse_params::<config::KineticParams>(file)?, seed, out)
        }
        ScenarioKind::Blobs => {
            scenarios::blobs::run(&parse_params::<config::BlobsParams>(file)?, seed, out)
        }
        ScenarioKind::Reversal => {
            scenarios::reversal::run(&parse_params::<config::ReversalParams>(file)?, seed, out)
        }
        ScenarioKind::Stscan => {
            scenarios::stscan::run(&parse_params::<config::StscanParams>(file)?, seed, out)
        }
    }
}

fn parse_params<T: serde::de::DeserializeOwned>(file: &ConfigFile) -> CliResult<T> {
    serde_json::from_value(file.params.clone()).map_err(|e| {
        CliError::Config(format!("invalid {} parameters: {e}", file.scenario.name()))
    })
}
