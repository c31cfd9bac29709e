//! Benchmark harness for flyte storage: times BLAS-style kernels over packed
//! operands, checks them against parent-precision references and writes CSV.
//!
//! Inputs come from ChaCha8 seeded with [`BenchConfig::seed`]; each value is
//! `2u - 1` for `u` uniform in `[0, 1)` at parent precision, narrowed to the
//! benchmark format with the configured rounding mode. Operands are drawn in
//! kernel argument order (`A`, then `B` or `x`, then `y`).

mod config;
mod report;
mod runner;
mod sweep;

pub use config::{AccessPath, BenchConfig, Kernel};
pub use report::{emit_csv, BenchReport, CSV_HEADER};
pub use runner::{run_benchmark, run_benchmark_with, CounterProvider};
pub use sweep::{geomean, level_geomeans, sweep, LevelSummary, SweepConfig};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("unknown format `{0}`")]
    UnknownFormat(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("problem size {0} is too large")]
    TooLarge(usize),
    #[error(transparent)]
    Flyte(#[from] flyte::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
