//! Command-line front end for the `mpibeam` model: reads a run
//! configuration, runs one sweep or scenario and writes CSV, JSON and
//! sample files.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use mpibeam::QuantMode;

pub use commands::RunOptions;
pub use config::ConfigFile;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mpibeam", version, about = "Multiphase SCPA and beamforming transmitter model")]
pub struct Cli {
    /// Run configuration (`key = value` lines under `[section]` headers).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "MPIBEAM_THREADS", value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "rounding|exhaustive")]
    pub quant_mode: Option<QuantMode>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// RMS phase and amplitude error versus amplitude.
    ErrorSweep,
    /// Constant-amplitude state maps.
    Contours,
    /// Drain efficiency versus backoff.
    Efficiency,
    /// Array patterns and steering errors.
    Beam,
    /// Modulated waveform through the transmitter, with EVM/ACLR/PAPR.
    Modulate,
    /// Golden decoder vectors.
    Vectors,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ErrorSweep => "error-sweep",
            Command::Contours => "contours",
            Command::Efficiency => "efficiency",
            Command::Beam => "beam",
            Command::Modulate => "modulate",
            Command::Vectors => "vectors",
        }
    }
}

/// Merges flags over the `[run]` section of the file.
pub fn resolve_options(cli: &Cli, file: &ConfigFile) -> Result<RunOptions, CliError> {
    let run = file.section("run");
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => run.get("threads")?,
    };
    if threads == Some(0) {
        return Err(CliError::Usage("threads must be at least 1".into()));
    }
    Ok(RunOptions {
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from(run.get_str("out").unwrap_or("out"))),
        seed: match cli.seed {
            Some(s) => s,
            None => run.get_or("seed", 1)?,
        },
        threads,
        quant: match cli.quant_mode {
            Some(q) => q,
            None => run.get_or("quant_mode", QuantMode::Rounding)?,
        },
    })
}

/// Runs the selected command and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let opt = resolve_options(cli, &file)?;
    std::fs::create_dir_all(&opt.out).map_err(|e| CliError::io(&opt.out, e))?;
    with_threads(opt.threads, || dispatch(cli.command, &file, &opt))
}

fn dispatch(command: Command, file: &ConfigFile, opt: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::ErrorSweep => commands::error_sweep(file, opt),
        Command::Contours => commands::contours(file, opt),
        Command::Efficiency => commands::efficiency(file, opt),
        Command::Beam => commands::beam(file, opt),
        Command::Modulate => commands::modulate(file, opt),
        Command::Vectors => commands::vectors(file, opt),
    }
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) if n > 1 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T>(_threads: Option<usize>, f: impl FnOnce() -> T) -> T {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("mpibeam").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let file = ConfigFile::parse("[run]\nseed = 5\nout = a\nquant_mode = exhaustive\nthreads = 3\n").unwrap();
        let opt = resolve_options(&cli(&["vectors"]), &file).unwrap();
        assert_eq!((opt.seed, opt.out.to_str(), opt.quant, opt.threads), (5, Some("a"), QuantMode::Exhaustive, Some(3)));
        let c = cli(&["vectors", "--seed", "9", "--out", "b", "--quant-mode", "rounding", "--threads", "2"]);
        let opt = resolve_options(&c, &file).unwrap();
        assert_eq!((opt.seed, opt.out.to_str(), opt.quant, opt.threads), (9, Some("b"), QuantMode::Rounding, Some(2)));
        assert!(resolve_options(&cli(&["beam", "--threads", "0"]), &file).is_err());
    }

    #[test]
    fn rejects_bad_flags() {
        assert!(Cli::try_parse_from(["mpibeam", "beam", "--quant-mode", "nearest"]).is_err());
        assert!(Cli::try_parse_from(["mpibeam", "frobnicate"]).is_err());
        assert!(Cli::try_parse_from(["mpibeam", "beam", "--seed", "-1"]).is_err());
    }
}
