//! Command-line front end: single solves with printed traces, Monte-Carlo
//! sweeps, fixed-channel itineraries, and the per-iteration cost comparison.
//! All artifacts are CSV files; exit code is nonzero on any fatal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fusionbeam::bcd::{self, SolverConfig};
use fusionbeam::experiments::{self, ExperimentConfig};
use fusionbeam::{sampling, Error, Result};

#[derive(Parser)]
#[command(
    name = "fusionbeam",
    version,
    about = "Joint MMSE transceiver design by block coordinate descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment configuration; the built-in reference setup if absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated algorithm ids to run (default: all configured).
    #[arg(long)]
    algorithms: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one random instance with the first selected algorithm and print
    /// its trace.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Channel SNR in dB.
        #[arg(long, default_value_t = 6.0)]
        snr0_db: f64,
    },
    /// Full Monte-Carlo sweep; writes sweep.csv and sweep_itineraries.csv.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fixed channel, many random starts; writes itinerary.csv (one row per
    /// outer iteration) and itinerary_summary.csv.
    Itinerary {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Relative per-outer-iteration cost on the homogeneous six-sensor
    /// setup; writes compare.csv.
    Compare {
        /// Master seed for the channel draw and the start.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory for CSV artifacts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Outer iterations to average over.
        #[arg(long, default_value_t = 10)]
        iters: usize,
    },
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

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { common, snr0_db } => cmd_solve(&common, snr0_db),
        Command::Sweep { common } => cmd_sweep(&common),
        Command::Itinerary { common } => cmd_itinerary(&common),
        Command::Compare { seed, out, iters } => cmd_compare(seed, &out, iters),
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::reference(),
    };
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    if let Some(list) = &common.algorithms {
        let ids: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        config.retain_algorithms(&ids)?;
    }
    config.validate()?;
    Ok(config)
}

fn in_pool<T: Send>(parallel: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match parallel {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build a {n}-thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

fn cmd_solve(common: &CommonArgs, snr0_db: f64) -> Result<()> {
    let config = load_config(common)?;
    let spec = &config.algorithms[0];
    let mut rng = sampling::seeded(sampling::derive_seed(config.master_seed, 0x501e, 0));
    let channels = experiments::draw_channels(
        &mut rng,
        config.model.fc_antennas,
        &config.model.sensor_antennas,
    );
    let model = config.build_model(snr0_db, channels)?;
    let algorithm = spec.to_algorithm(model.num_sensors())?;
    let solver = SolverConfig {
        rel_tol: config.stopping.rel_tol,
        max_outer: config.stopping.max_outer,
        seed: config.master_seed,
        ..SolverConfig::default()
    };
    let out = bcd::run(&model, &algorithm, &solver)?;
    println!("algorithm: {}", spec.id());
    println!("channel SNR: {snr0_db} dB");
    println!("initial MSE: {:.9e}", out.trace.initial_mse);
    for (k, rec) in out.trace.outer.iter().enumerate() {
        println!("outer {:>4}: mse {:.9e}", k + 1, rec.mse);
    }
    println!("termination: {:?}", out.trace.termination);
    println!("final MSE: {:.9e}", out.mse);
    let residual = bcd::stationarity_residual(&model, &out.beamformers, &out.receiver)?;
    println!("stationarity residual: {:.3e}", residual);
    Ok(())
}

fn cmd_sweep(common: &CommonArgs) -> Result<()> {
    let config = load_config(common)?;
    let records = in_pool(common.parallel, || experiments::run_sweep(&config))??;
    ensure_dir(&common.out)?;
    experiments::export_csv(&records, &common.out.join("sweep.csv"))?;
    experiments::export_itineraries(&records, &common.out.join("sweep_itineraries.csv"))?;
    println!(
        "{:>8}  {:<28} {:>14} {:>11} {:>6} {:>9}",
        "snr0_db", "algorithm", "mean_mse", "mean_iters", "runs", "failures"
    );
    for row in experiments::aggregate(&config, &records) {
        println!(
            "{:>8.1}  {:<28} {:>14.6e} {:>11.1} {:>6} {:>9}",
            row.snr0_db, row.algorithm, row.mean_mse, row.mean_iters, row.runs, row.failures
        );
    }
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} runs, {} failed; artifacts in {}",
        records.len(),
        failures,
        common.out.display()
    );
    Ok(())
}

fn cmd_itinerary(common: &CommonArgs) -> Result<()> {
    let config = load_config(common)?;
    let records = in_pool(common.parallel, || experiments::run_itinerary(&config))??;
    ensure_dir(&common.out)?;
    experiments::export_itineraries(&records, &common.out.join("itinerary.csv"))?;
    experiments::export_csv(&records, &common.out.join("itinerary_summary.csv"))?;
    println!(
        "{:<28} {:>6} {:>14} {:>11}",
        "algorithm", "seed#", "final_mse", "outer_iters"
    );
    for (k, r) in records.iter().enumerate() {
        match &r.error {
            None => println!(
                "{:<28} {:>6} {:>14.6e} {:>11}",
                r.algorithm,
                k / config.algorithms.len(),
                r.converged_mse,
                r.itinerary.len()
            ),
            Some(e) => println!("{:<28} {:>6} failed: {e}", r.algorithm, k / config.algorithms.len()),
        }
    }
    println!("artifacts in {}", common.out.display());
    Ok(())
}

fn cmd_compare(seed: u64, out: &Path, iters: usize) -> Result<()> {
    let rows = experiments::run_compare(seed, iters)?;
    ensure_dir(out)?;
    std::fs::write(out.join("compare.csv"), experiments::compare_csv(&rows)?)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("compare.csv: {e}"))))?;
    println!("{:<28} {:>12} {:>18}", "algorithm", "outer_iters", "secs_per_outer");
    for r in &rows {
        println!("{:<28} {:>12} {:>18.6e}", r.algorithm, r.outer_iters, r.mean_secs_per_outer);
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
