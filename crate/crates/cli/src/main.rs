//! `grsm`: BER sweeps and design tables for generalized receive spatial
//! modulation under oscillator phase noise.
//!
//! Exit status is 0 on success, 1 for configuration or usage errors and 2
//! for failures while running.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use grsm_core::constellation::{build_mqam, build_pools};
use grsm_core::mapping::build_mapping_table;
use grsm_core::report::{
    ber_plot_svg, content_hash, matrix_csv, overlap_rows, pn_variance_rows, pool_design_csv, rows_csv,
    write_manifest, write_text, ManifestPoint, RunManifest, Series, SweepManifest, SweepRow, SweepWriter,
    OVERLAP_HEADER, PN_VARIANCE_HEADER,
};
use grsm_core::sim::Simulator;

use crate::config::{RunConfigFile, CONFIG_REFERENCE};

/// Output directory override for `ber-sweep` when `--out` is not given.
const OUT_DIR_ENV: &str = "GRSM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "grsm", version, about = "GRSM link simulator with oscillator phase noise")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo BER sweep over the SNR grid of a config file.
    #[command(after_long_help = CONFIG_REFERENCE)]
    BerSweep(SweepArgs),
    /// Pool and spatial-pattern mapping table as CSV.
    PoolDesign {
        #[arg(short, long)]
        modulation: usize,
        /// Number of spatial bits.
        #[arg(long)]
        na: usize,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-pool angular separation, distance and overlap probability.
    OverlapTable {
        #[arg(short, long)]
        modulation: usize,
        /// Phase-noise variance in rad^2.
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combined phase-noise variance law against Monte Carlo.
    PnVariance {
        #[arg(long)]
        sigma2: f64,
        #[arg(long, default_value_t = 4)]
        max_branches: usize,
        #[arg(long, default_value_t = 1_000_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes one channel realization of a config as a CSV matrix.
    ChannelDump {
        #[arg(long)]
        config: PathBuf,
        /// Channel block index.
        #[arg(long, default_value_t = 0)]
        block: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $GRSM_OUT_DIR, then ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides sweep.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write an SVG plot of the BER curves.
    #[arg(long)]
    plot: bool,
    /// Runs exactly this many trials per SNR point.
    #[arg(long)]
    trials_override: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("grsm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::BerSweep(args) => ber_sweep(args),
        Command::PoolDesign { modulation, na, out } => {
            let c = build_mqam(modulation).map_err(config_err)?;
            let pools = build_pools(&c).map_err(config_err)?;
            let table = build_mapping_table(modulation, na, &pools).map_err(config_err)?;
            emit(out.as_deref(), &pool_design_csv(&table))
        }
        Command::OverlapTable { modulation, sigma2, out } => {
            if !(sigma2 > 0.0) || !sigma2.is_finite() {
                return Err(CliError::Config(format!("sigma2 must be positive, got {sigma2}")));
            }
            let c = build_mqam(modulation).map_err(config_err)?;
            let pools = build_pools(&c).map_err(config_err)?;
            let rows = overlap_rows(&pools, sigma2).map_err(runtime_err)?;
            emit(out.as_deref(), &rows_csv(&rows, &OVERLAP_HEADER).map_err(runtime_err)?)
        }
        Command::PnVariance {
            sigma2,
            max_branches,
            trials,
            seed,
            out,
        } => {
            if max_branches == 0 || trials < 2 || !(sigma2 >= 0.0) || !sigma2.is_finite() {
                return Err(CliError::Config(
                    "need max_branches >= 1, trials >= 2 and a finite sigma2 >= 0".into(),
                ));
            }
            let rows = pn_variance_rows(sigma2, max_branches, trials, seed).map_err(runtime_err)?;
            emit(out.as_deref(), &rows_csv(&rows, &PN_VARIANCE_HEADER).map_err(runtime_err)?)
        }
        Command::ChannelDump { config, block, out } => {
            let file = RunConfigFile::load(&config).map_err(CliError::Config)?;
            let job = file.jobs().map_err(CliError::Config)?.remove(0);
            let sim = Simulator::new(job.config).map_err(runtime_err)?;
            let (ch, rejected) = sim.channel_block(block).map_err(runtime_err)?;
            eprintln!(
                "block {block}: selected antennas {:?}, alpha {:.6}, rejected draws {rejected}",
                ch.selected, ch.alpha
            );
            emit(out.as_deref(), &matrix_csv(&ch.h))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_text(path, text).map_err(runtime_err),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(runtime_err),
    }
}

fn ber_sweep(args: SweepArgs) -> Result<(), CliError> {
    let file = RunConfigFile::load(&args.config).map_err(CliError::Config)?;
    let mut jobs = file.jobs().map_err(CliError::Config)?;
    for job in &mut jobs {
        if let Some(seed) = args.seed {
            job.config.master_seed = seed;
        }
        if let Some(n) = args.trials_override {
            job.config.trials_per_point = n;
            job.config.max_trials_per_point = n;
            job.config.min_bit_errors = 0;
        }
    }

    let out_dir = args
        .out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let csv_path = out_dir.join("ber_sweep.csv");

    let pool = match args.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(runtime_err)?;

    pool.install(|| {
        let mut writer = SweepWriter::create(&csv_path).map_err(runtime_err)?;
        let mut runs = Vec::with_capacity(jobs.len());
        let mut series = Vec::with_capacity(jobs.len());
        for job in &jobs {
            let hash = job.config.hash();
            info!("running {} ({hash})", job.label);
            let sim = Simulator::new(job.config.clone()).map_err(runtime_err)?;
            let records = sim
                .run_sweep_with(|rec| writer.write(&SweepRow::from_record(rec, &hash)))
                .map_err(runtime_err)?;
            series.push(Series {
                label: job.label.clone(),
                points: records.iter().map(|r| (r.snr_db, r.ber())).collect(),
            });
            runs.push(RunManifest {
                label: job.label.clone(),
                config: job.config.clone(),
                config_hash: hash,
                n_active: sim.na(),
                alpha: sim.alpha(),
                rejected_channels: records.iter().map(|r| r.rejected_channels).sum(),
                points: records.iter().map(ManifestPoint::from_record).collect(),
            });
        }
        drop(writer);

        let bytes = std::fs::read(&csv_path).map_err(runtime_err)?;
        let manifest = SweepManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            results_file: "ber_sweep.csv".into(),
            results_hash: content_hash(&bytes, 20),
            runs,
        };
        write_manifest(&out_dir.join("manifest.json"), &manifest).map_err(runtime_err)?;
        if args.plot {
            write_text(&out_dir.join("ber_sweep.svg"), &ber_plot_svg(&series)).map_err(runtime_err)?;
        }
        eprintln!("wrote {}", csv_path.display());
        Ok(())
    })
}
