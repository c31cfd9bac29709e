use std::fmt;
use std::str::FromStr;

use flyte::{format_of, FlyteFormat, RoundingMode};

use crate::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    Scale,
    Axpy,
    Dot,
    Magnitude,
    ReduceSum,
    Gemv,
    Gemm,
}

impl Kernel {
    pub const ALL: [Kernel; 7] =
        [Kernel::Scale, Kernel::Axpy, Kernel::Dot, Kernel::Magnitude, Kernel::ReduceSum, Kernel::Gemv, Kernel::Gemm];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Scale => "scale",
            Kernel::Axpy => "axpy",
            Kernel::Dot => "dot",
            Kernel::Magnitude => "magnitude",
            Kernel::ReduceSum => "sum",
            Kernel::Gemv => "gemv",
            Kernel::Gemm => "gemm",
        }
    }

    /// BLAS level: 1 for vector kernels, 2 for gemv, 3 for gemm.
    pub fn level(self) -> u8 {
        match self {
            Kernel::Gemv => 2,
            Kernel::Gemm => 3,
            _ => 1,
        }
    }

    /// Data elements per operand for problem size `size`: `size` at level 1,
    /// `size^2` above.
    pub fn elements(self, size: usize) -> Option<usize> {
        if self.level() == 1 {
            Some(size)
        } else {
            size.checked_mul(size)
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "reduce_sum" | "reduce-sum" => return Ok(Kernel::ReduceSum),
            "nrm2" => return Ok(Kernel::Magnitude),
            _ => {}
        }
        Kernel::ALL.into_iter().find(|k| k.name() == s).ok_or(BenchError::UnknownKernel(s))
    }
}

/// How kernels reach packed elements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AccessPath {
    /// Vector-group pack/unpack.
    #[default]
    Simd,
    /// One checked get/set per element.
    Scalar,
}

impl FromStr for AccessPath {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "simd" => Ok(AccessPath::Simd),
            "scalar" => Ok(AccessPath::Scalar),
            other => Err(BenchError::InvalidConfig(format!("unknown path `{other}`"))),
        }
    }
}

impl fmt::Display for AccessPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessPath::Simd => "simd",
            AccessPath::Scalar => "scalar",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub kernel: Kernel,
    pub format: FlyteFormat,
    /// Elements for level 1, row and column count for levels 2 and 3.
    pub size: usize,
    pub reps: usize,
    pub mode: RoundingMode,
    pub unroll: usize,
    pub seed: u64,
    pub check: bool,
    pub path: AccessPath,
}

impl BenchConfig {
    pub const DEFAULT_SEED: u64 = 1;

    /// Parses names; everything else takes its default.
    pub fn new(kernel: &str, format: &str, size: usize, reps: usize) -> Result<Self> {
        Ok(BenchConfig {
            kernel: kernel.parse()?,
            format: parse_format(format)?,
            size,
            reps,
            mode: RoundingMode::NearestEvenExact,
            unroll: 1,
            seed: Self::DEFAULT_SEED,
            check: false,
            path: AccessPath::Simd,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(BenchError::InvalidConfig("reps must be at least 1".into()));
        }
        if !matches!(self.unroll, 1 | 2) {
            return Err(BenchError::InvalidConfig(format!("unroll must be 1 or 2, got {}", self.unroll)));
        }
        Ok(())
    }
}

pub(crate) fn parse_format(name: &str) -> Result<FlyteFormat> {
    format_of(name.trim()).map_err(|_| BenchError::UnknownFormat(name.trim().to_string()))
}

pub(crate) fn parse_mode(name: &str) -> Result<RoundingMode> {
    name.trim().parse().map_err(BenchError::InvalidConfig)
}
