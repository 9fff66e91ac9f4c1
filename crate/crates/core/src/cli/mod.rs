//! Experiment runner: configuration, training loop, metrics, benchmarking
//! and the command-line front end.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 configuration error,
//! 3 data error, 4 verification failure.

mod config;
mod train;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{BinarizeMode, CdMode, DataSource, RunConfig};
pub use train::{
    bench, eval_seeds, evaluate, evaluate_params, initial_params, load_data, train, train_on, BenchReport,
    MetricsRecord, TrainData, TrainOutcome, Trainer, BENCH_HEADER, CHECKPOINT_FILE, METRICS_FILE, METRICS_HEADER,
    TIMING_FILE,
};

use crate::data::{generate_synthetic, write_matrix_file};
use crate::error::{Error, Result};
use crate::verify::{reports_to_csv, run_suite, SuiteConfig};

pub const EXIT_NUMERIC: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Precondition(_) => EXIT_CONFIG,
        Error::Format(_) | Error::Io { .. } | Error::Dimension { .. } => EXIT_DATA,
        _ => EXIT_NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(name = "rbm-ssd", version, about = "Train RBMs with SGD or stochastic spectral descent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Configuration file (key = value lines).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Bit-exact outputs; wall-clock times go to timing.csv.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write metrics.csv and final.ckpt.
    Train(Common),
    /// Reconstruction error of a checkpoint on the configured data.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Milliseconds per 1000 training updates.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        iters: u64,
    },
    /// Run the bound verification suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Overrides every per-bound trial count.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Write the synthetic train and test sets as RBMMAT1 files.
    GenData(Common),
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            e => e,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        if let DataSource::Synthetic(s) = &mut cfg.data {
            if s.seed == cfg.seed {
                s.seed = seed;
            }
        }
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.deterministic |= common.deterministic;
    Ok(cfg)
}

fn write_output(dir: Option<&Path>, name: &str, text: &str) -> Result<()> {
    print!("{text}");
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Runs one parsed command, returning the process exit code.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Train(common) => resolve(&common).and_then(|cfg| {
            let out = train(&cfg)?;
            let last = out.records.last().expect("initial row");
            println!("{METRICS_HEADER}\n{}", last.csv_row());
            Ok(0)
        }),
        Command::Eval { common, checkpoint } => resolve(&common).and_then(|cfg| {
            let data = load_data(&cfg)?;
            let r = evaluate(&checkpoint, &data, cfg.seed)?;
            write_output(cfg.output_dir.as_deref(), "eval.csv", &format!("{METRICS_HEADER}\n{}\n", r.csv_row()))?;
            Ok(0)
        }),
        Command::Bench { common, iters } => resolve(&common).and_then(|cfg| {
            let data = load_data(&cfg)?;
            let r = bench(&cfg, &data.train, iters)?;
            write_output(cfg.output_dir.as_deref(), "bench.csv", &format!("{BENCH_HEADER}\n{}\n", r.csv_row()))?;
            Ok(0)
        }),
        Command::Verify { common, trials } => resolve(&common).and_then(|cfg| {
            if trials == Some(0) {
                return Err(Error::Config("trials must be >= 1".into()));
            }
            let reports = run_suite(&SuiteConfig { trials, ..SuiteConfig::new(cfg.seed) })?;
            write_output(cfg.output_dir.as_deref(), "bounds.csv", &reports_to_csv(&reports))?;
            Ok(if reports.iter().all(|r| r.passed()) { 0 } else { EXIT_VERIFY })
        }),
        Command::GenData(common) => resolve(&common).and_then(|cfg| {
            let DataSource::Synthetic(s) = &cfg.data else {
                return Err(Error::Config("gen-data needs data = synthetic".into()));
            };
            let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let d = generate_synthetic(s)?;
            write_matrix_file(dir.join("train.rbmmat"), &d.train)?;
            write_matrix_file(dir.join("test.rbmmat"), &d.test)?;
            println!("wrote {} and {} examples to {}", d.train.len(), d.test.len(), dir.display());
            Ok(0)
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}
