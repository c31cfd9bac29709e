use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use flytebench::{emit_csv, level_geomeans, run_benchmark, sweep, AccessPath, BenchConfig, BenchReport, SweepConfig};

#[derive(Parser)]
#[command(name = "flytebench", version, about = "Benchmark BLAS-style kernels over flyte packed arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time one kernel on one format and size.
    Run {
        /// scale, axpy, dot, magnitude, sum, gemv or gemm.
        #[arg(long)]
        kernel: String,
        /// flyte16, flyte24, f32, flyte40, flyte48, flyte56 or f64.
        #[arg(long)]
        format: String,
        /// Elements for vector kernels, rows and columns for gemv/gemm.
        #[arg(long)]
        size: usize,
        #[arg(long)]
        reps: usize,
        /// toward-zero, nearest-even, nearest-heuristic or to-odd.
        #[arg(long, default_value = "nearest-even")]
        mode: String,
        #[arg(long, default_value_t = 1)]
        unroll: usize,
        #[arg(long, default_value_t = BenchConfig::DEFAULT_SEED)]
        seed: u64,
        /// Compare against the parent-precision reference.
        #[arg(long)]
        check: bool,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// simd (vector groups) or scalar (one element at a time).
        #[arg(long, default_value = "simd")]
        path: String,
    },
    /// Run every combination listed in a key=value config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

fn write_csv(reports: &[BenchReport], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            emit_csv(reports, BufWriter::new(file))?;
        }
        None => emit_csv(reports, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { kernel, format, size, reps, mode, unroll, seed, check, csv, path } => {
            let mut cfg = BenchConfig::new(&kernel, &format, size, reps)?;
            cfg.mode = mode.parse().map_err(anyhow::Error::msg)?;
            cfg.unroll = unroll;
            cfg.seed = seed;
            cfg.check = check;
            cfg.path = path.parse::<AccessPath>()?;
            let report = run_benchmark(&cfg)?;
            write_csv(std::slice::from_ref(&report), csv.as_deref())?;
        }
        Command::Sweep { config } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = SweepConfig::parse(&text)?;
            let reports = sweep(&cfg)?;
            write_csv(&reports, cfg.csv.as_deref())?;
            if cfg.geomean {
                let mut err = io::stderr().lock();
                writeln!(err, "level,format,reports,geomean_ns_per_elem")?;
                for s in level_geomeans(&reports) {
                    writeln!(err, "{},{},{},{}", s.level, s.format, s.reports, s.geomean_ns_per_elem)?;
                }
            }
        }
    }
    Ok(())
}
