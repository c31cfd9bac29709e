use std::io::Write;

use crate::config::BenchConfig;
use crate::Result;

pub const CSV_HEADER: [&str; 10] = [
    "kernel",
    "format",
    "size",
    "reps",
    "unroll",
    "mode",
    "ns_per_elem_median",
    "ns_per_elem_min",
    "bytes",
    "max_rel_err",
];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Data elements per operand.
    pub elements: usize,
    pub ns_per_elem_median: f64,
    pub ns_per_elem_min: f64,
    /// Packed footprint of every operand, pad included.
    pub bytes: u64,
    /// Against the parent-precision reference; `None` unless checked.
    pub max_rel_err: Option<f64>,
    /// Raw wall time of each timed rep, in nanoseconds.
    pub rep_ns: Vec<u64>,
    /// Totals from a [`crate::CounterProvider`], if one was attached.
    pub counters: Vec<(String, u64)>,
}

impl BenchReport {
    fn record(&self) -> [String; 10] {
        let c = &self.config;
        [
            c.kernel.to_string(),
            c.format.to_string(),
            c.size.to_string(),
            c.reps.to_string(),
            c.unroll.to_string(),
            c.mode.to_string(),
            self.ns_per_elem_median.to_string(),
            self.ns_per_elem_min.to_string(),
            self.bytes.to_string(),
            self.max_rel_err.map(|e| e.to_string()).unwrap_or_default(),
        ]
    }
}

/// Header line plus one row per report.
pub fn emit_csv<W: Write>(reports: &[BenchReport], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}
