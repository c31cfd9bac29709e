use std::collections::BTreeMap;
use std::path::PathBuf;

use flyte::{FlyteFormat, RoundingMode};

use crate::config::{parse_format, parse_mode, AccessPath, BenchConfig, Kernel};
use crate::report::BenchReport;
use crate::runner::run_benchmark;
use crate::{BenchError, Result};

/// A sweep read from a `key=value` file. List values are comma separated;
/// `#` starts a comment.
///
/// ```text
/// kernels = scale, dot, gemv
/// formats = flyte24, f32, flyte40, f64
/// sizes   = 1024, 4096
/// reps    = 10
/// mode    = nearest-even
/// unroll  = 1
/// seed    = 1
/// check   = true
/// path    = simd
/// csv     = results.csv
/// geomean = true
/// ```
///
/// `kernels`, `formats` and `sizes` are required.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub kernels: Vec<Kernel>,
    pub formats: Vec<FlyteFormat>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub mode: RoundingMode,
    pub unroll: usize,
    pub seed: u64,
    pub check: bool,
    pub path: AccessPath,
    pub csv: Option<PathBuf>,
    pub geomean: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kernels: Vec::new(),
            formats: Vec::new(),
            sizes: Vec::new(),
            reps: 10,
            mode: RoundingMode::NearestEvenExact,
            unroll: 1,
            seed: BenchConfig::DEFAULT_SEED,
            check: false,
            path: AccessPath::Simd,
            csv: None,
            geomean: false,
        }
    }
}

fn list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| BenchError::InvalidConfig(format!("{key}: `{value}` is not a number")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(BenchError::InvalidConfig(format!("{key}: `{other}` is not a boolean"))),
    }
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SweepConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| BenchError::InvalidConfig(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "kernels" => cfg.kernels = list(value, |s| s.parse())?,
                "formats" => cfg.formats = list(value, parse_format)?,
                "sizes" => cfg.sizes = list(value, |s| number(key, s))?,
                "reps" => cfg.reps = number(key, value)?,
                "mode" => cfg.mode = parse_mode(value)?,
                "unroll" => cfg.unroll = number(key, value)?,
                "seed" => cfg.seed = number(key, value)?,
                "check" => cfg.check = boolean(key, value)?,
                "path" => cfg.path = value.parse()?,
                "csv" => cfg.csv = Some(PathBuf::from(value)),
                "geomean" => cfg.geomean = boolean(key, value)?,
                other => return Err(BenchError::InvalidConfig(format!("line {}: unknown key `{other}`", n + 1))),
            }
        }
        for (name, empty) in
            [("kernels", cfg.kernels.is_empty()), ("formats", cfg.formats.is_empty()), ("sizes", cfg.sizes.is_empty())]
        {
            if empty {
                return Err(BenchError::InvalidConfig(format!("`{name}` is missing or empty")));
            }
        }
        Ok(cfg)
    }

    /// Every kernel x format x size combination, in that nesting order.
    pub fn configs(&self) -> Vec<BenchConfig> {
        let mut out = Vec::new();
        for &kernel in &self.kernels {
            for &format in &self.formats {
                for &size in &self.sizes {
                    out.push(BenchConfig {
                        kernel,
                        format,
                        size,
                        reps: self.reps,
                        mode: self.mode,
                        unroll: self.unroll,
                        seed: self.seed,
                        check: self.check,
                        path: self.path,
                    });
                }
            }
        }
        out
    }
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<BenchReport>> {
    cfg.configs().iter().map(run_benchmark).collect()
}

/// `None` for an empty slice.
pub fn geomean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let log_sum: f64 = values.iter().map(|v| v.ln()).sum();
    Some((log_sum / values.len() as f64).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSummary {
    pub level: u8,
    pub format: FlyteFormat,
    pub reports: usize,
    pub geomean_ns_per_elem: f64,
}

/// Geometric mean of the median ns/element over the reports of each
/// (BLAS level, format) pair.
pub fn level_geomeans(reports: &[BenchReport]) -> Vec<LevelSummary> {
    let mut groups: BTreeMap<(u8, u8), (FlyteFormat, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        let key = (r.config.kernel.level(), r.config.format.id());
        groups.entry(key).or_insert_with(|| (r.config.format, Vec::new())).1.push(r.ns_per_elem_median);
    }
    groups
        .into_iter()
        .map(|((level, _), (format, values))| LevelSummary {
            level,
            format,
            reports: values.len(),
            geomean_ns_per_elem: geomean(&values).unwrap_or(0.0),
        })
        .collect()
}
