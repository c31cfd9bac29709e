//! Bit-exact conversion between flytes and their parent types.
//!
//! All functions work on raw bit patterns held in a `u64`; a binary32 parent
//! pattern occupies the low 32 bits.

use std::fmt;
use std::str::FromStr;

use crate::formats::FlyteFormat;

/// How the discarded mantissa bits are folded into the kept ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RoundingMode {
    /// Drop the discarded bits.
    TowardZero,
    /// IEEE round-to-nearest, ties-to-even, with NaNs kept NaN.
    NearestEvenExact,
    /// Add half an ULP, then truncate. No special cases at all: exact ties
    /// round up, and a NaN whose kept mantissa is all ones carries into the
    /// exponent and sign.
    NearestHeuristic,
    /// Truncate, then set the lowest kept bit if anything was discarded.
    ToOdd,
}

impl RoundingMode {
    pub const ALL: [RoundingMode; 4] = [
        RoundingMode::TowardZero,
        RoundingMode::NearestEvenExact,
        RoundingMode::NearestHeuristic,
        RoundingMode::ToOdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RoundingMode::TowardZero => "toward-zero",
            RoundingMode::NearestEvenExact => "nearest-even",
            RoundingMode::NearestHeuristic => "nearest-heuristic",
            RoundingMode::ToOdd => "to-odd",
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoundingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoundingMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown rounding mode `{s}`"))
    }
}

/// Flyte pattern to parent pattern: append zero bits.
#[inline(always)]
pub fn widen(bits: u64, fmt: FlyteFormat) -> u64 {
    (bits & fmt.bit_mask()) << fmt.discarded_bits()
}

/// Parent pattern to flyte pattern under `mode`.
#[inline]
pub fn narrow(bits: u64, fmt: FlyteFormat, mode: RoundingMode) -> u64 {
    let dropped = fmt.discarded_bits();
    if dropped == 0 {
        return bits & fmt.bit_mask();
    }
    let parent_mask = fmt.parent().bit_mask();
    let bits = bits & parent_mask;
    let kept = bits >> dropped;
    let rest = bits & ((1u64 << dropped) - 1);
    let half = 1u64 << (dropped - 1);
    match mode {
        RoundingMode::TowardZero => kept,
        RoundingMode::NearestHeuristic => (bits.wrapping_add(half) & parent_mask) >> dropped,
        RoundingMode::NearestEvenExact | RoundingMode::ToOdd => {
            let parent = fmt.parent();
            let exponent_all_ones = bits & parent.exponent_mask() == parent.exponent_mask();
            if exponent_all_ones {
                // Infinities have nothing to round. NaN payloads round half-up
                // unless the kept mantissa is all ones, where the increment
                // would escape into the exponent.
                if rest >= half && kept & fmt.mantissa_mask() != fmt.mantissa_mask() {
                    kept + 1
                } else {
                    kept
                }
            } else if mode == RoundingMode::ToOdd {
                kept | (rest != 0) as u64
            } else {
                // A carry out of the mantissa bumps the exponent; from the
                // largest finite value it lands exactly on infinity.
                let up = (rest > half) as u64 | ((rest == half) as u64 & kept);
                kept + (up & 1)
            }
        }
    }
}

/// The bits around the rounding point of a narrowing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundDecomposition {
    /// The flyte pattern obtained by truncation.
    pub kept_bits: u64,
    /// Lowest kept bit.
    pub pre_guard: bool,
    /// Highest discarded bit.
    pub guard: bool,
    /// Second-highest discarded bit.
    pub round: bool,
    /// OR of every discarded bit below the round bit.
    pub sticky: bool,
}

impl RoundDecomposition {
    /// Parent pattern rebuilt from the kept bits and the full discarded field.
    pub fn reassemble(&self, discarded_field: u64, fmt: FlyteFormat) -> u64 {
        widen(self.kept_bits, fmt) | discarded_field
    }
}

pub fn round_decompose(bits: u64, fmt: FlyteFormat) -> RoundDecomposition {
    let dropped = fmt.discarded_bits();
    let bits = bits & fmt.parent().bit_mask();
    let kept_bits = bits >> dropped;
    let bit = |i: u32| dropped > i && (bits >> (dropped - 1 - i)) & 1 == 1;
    let sticky = dropped > 2 && bits & ((1u64 << (dropped - 2)) - 1) != 0;
    RoundDecomposition {
        kept_bits,
        pre_guard: kept_bits & 1 == 1,
        guard: bit(0),
        round: bit(1),
        sticky,
    }
}
