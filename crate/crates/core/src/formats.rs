//! The flyte format family and IEEE-754 field semantics.
//!
//! A flyte keeps the sign and exponent fields of its parent IEEE-754 type
//! (binary32 or binary64) and drops whole low-order bytes of the mantissa.
//! Because the exponent is never resized, converting to and from the parent
//! is a shift plus (for narrowing) a rounding decision on the dropped bits.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::Error;

/// Bit-layout descriptor of a flyte storage format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FlyteFormat {
    name: &'static str,
    id: u8,
    total_bits: u32,
    exponent_bits: u32,
    mantissa_bits: u32,
    bias: i32,
    parent_bits: u32,
}

impl FlyteFormat {
    pub const FLYTE16: FlyteFormat = FlyteFormat::binary32_family("flyte16", 0, 16);
    pub const FLYTE24: FlyteFormat = FlyteFormat::binary32_family("flyte24", 1, 24);
    /// binary32 itself, usable wherever a flyte is expected.
    pub const F32: FlyteFormat = FlyteFormat::binary32_family("f32", 2, 32);
    pub const FLYTE40: FlyteFormat = FlyteFormat::binary64_family("flyte40", 3, 40);
    pub const FLYTE48: FlyteFormat = FlyteFormat::binary64_family("flyte48", 4, 48);
    pub const FLYTE56: FlyteFormat = FlyteFormat::binary64_family("flyte56", 5, 56);
    /// binary64 itself, usable wherever a flyte is expected.
    pub const F64: FlyteFormat = FlyteFormat::binary64_family("f64", 6, 64);

    const fn binary32_family(name: &'static str, id: u8, total_bits: u32) -> Self {
        FlyteFormat {
            name,
            id,
            total_bits,
            exponent_bits: 8,
            mantissa_bits: total_bits - 9,
            bias: 127,
            parent_bits: 32,
        }
    }

    const fn binary64_family(name: &'static str, id: u8, total_bits: u32) -> Self {
        FlyteFormat {
            name,
            id,
            total_bits,
            exponent_bits: 11,
            mantissa_bits: total_bits - 12,
            bias: 1023,
            parent_bits: 64,
        }
    }

    /// Looks a format up by its index in [`FORMATS`].
    pub fn from_id(id: u8) -> Option<FlyteFormat> {
        FORMATS.get(id as usize).copied()
    }

    pub const fn name(&self) -> &'static str {
        self.name
    }

    /// Position in [`FORMATS`]; also the format byte of the `FLYT` container.
    pub const fn id(&self) -> u8 {
        self.id
    }

    pub const fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub const fn sign_bits(&self) -> u32 {
        1
    }

    pub const fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub const fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub const fn bias(&self) -> i32 {
        self.bias
    }

    pub const fn parent_bits(&self) -> u32 {
        self.parent_bits
    }

    /// Storage width of one element in bytes.
    pub const fn bytes(&self) -> usize {
        (self.total_bits / 8) as usize
    }

    pub const fn parent_bytes(&self) -> usize {
        (self.parent_bits / 8) as usize
    }

    /// Number of low parent bits dropped when narrowing.
    pub const fn discarded_bits(&self) -> u32 {
        self.parent_bits - self.total_bits
    }

    /// True for `f32` and `f64`, where widening and narrowing are the identity.
    pub const fn is_native(&self) -> bool {
        self.total_bits == self.parent_bits
    }

    /// The parent type viewed as a format.
    pub const fn parent(&self) -> FlyteFormat {
        if self.parent_bits == 32 {
            FlyteFormat::F32
        } else {
            FlyteFormat::F64
        }
    }

    pub const fn bit_mask(&self) -> u64 {
        low_mask(self.total_bits)
    }

    pub const fn sign_mask(&self) -> u64 {
        1 << (self.total_bits - 1)
    }

    pub const fn exponent_mask(&self) -> u64 {
        low_mask(self.exponent_bits) << self.mantissa_bits
    }

    pub const fn mantissa_mask(&self) -> u64 {
        low_mask(self.mantissa_bits)
    }
}

impl fmt::Display for FlyteFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl FromStr for FlyteFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        format_of(s)
    }
}

/// All supported formats in container-id order.
pub const FORMATS: [FlyteFormat; 7] = [
    FlyteFormat::FLYTE16,
    FlyteFormat::FLYTE24,
    FlyteFormat::F32,
    FlyteFormat::FLYTE40,
    FlyteFormat::FLYTE48,
    FlyteFormat::FLYTE56,
    FlyteFormat::F64,
];

/// Resolves a format name. `flyte32` and `flyte64` are accepted as aliases of
/// `f32` and `f64`.
pub fn format_of(name: &str) -> Result<FlyteFormat, Error> {
    let canonical = match name {
        "flyte32" => "f32",
        "flyte64" => "f64",
        other => other,
    };
    FORMATS
        .iter()
        .find(|f| f.name == canonical)
        .copied()
        .ok_or_else(|| Error::UnknownFormat(name.to_string()))
}

const fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FloatClass {
    PositiveZero,
    NegativeZero,
    Subnormal,
    Normal,
    PositiveInfinity,
    NegativeInfinity,
    QuietNaN,
    SignallingNaN,
}

impl FloatClass {
    pub fn is_nan(self) -> bool {
        matches!(self, FloatClass::QuietNaN | FloatClass::SignallingNaN)
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, FloatClass::PositiveInfinity | FloatClass::NegativeInfinity)
    }

    pub fn is_zero(self) -> bool {
        matches!(self, FloatClass::PositiveZero | FloatClass::NegativeZero)
    }

    pub fn is_finite(self) -> bool {
        !self.is_nan() && !self.is_infinite()
    }
}

/// Classifies `bits` using the field widths of `fmt`. Bits above
/// `fmt.total_bits()` are ignored.
pub fn classify(bits: u64, fmt: FlyteFormat) -> FloatClass {
    let bits = bits & fmt.bit_mask();
    let negative = bits & fmt.sign_mask() != 0;
    let exponent = bits & fmt.exponent_mask();
    let mantissa = bits & fmt.mantissa_mask();
    if exponent == fmt.exponent_mask() {
        if mantissa == 0 {
            if negative {
                FloatClass::NegativeInfinity
            } else {
                FloatClass::PositiveInfinity
            }
        } else if mantissa >> (fmt.mantissa_bits - 1) != 0 {
            FloatClass::QuietNaN
        } else {
            FloatClass::SignallingNaN
        }
    } else if exponent == 0 {
        match (mantissa, negative) {
            (0, false) => FloatClass::PositiveZero,
            (0, true) => FloatClass::NegativeZero,
            _ => FloatClass::Subnormal,
        }
    } else {
        FloatClass::Normal
    }
}

/// An exact real number `(-1)^negative * significand * 2^exponent`.
///
/// Every finite value of every supported format fits, so this serves as a
/// rounding reference that never rounds itself. Equality and ordering are by
/// value: `+0 == -0`, and `2 * 2^0 == 1 * 2^1`.
#[derive(Clone, Copy, Debug)]
pub struct ExactValue {
    pub negative: bool,
    pub significand: u64,
    pub exponent: i32,
}

impl ExactValue {
    pub fn is_zero(&self) -> bool {
        self.significand == 0
    }

    pub fn abs(self) -> ExactValue {
        ExactValue {
            negative: false,
            ..self
        }
    }

    /// Nearest `f64`; exact whenever the value is representable in binary64.
    pub fn to_f64(&self) -> f64 {
        let magnitude = self.significand as f64 * pow2(self.exponent);
        if self.negative {
            -magnitude
        } else {
            magnitude
        }
    }

    fn cmp_magnitude(&self, other: &ExactValue) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        // Position of the leading one bit decides unless both are equal.
        let lead = |v: &ExactValue| v.exponent as i64 + 63 - v.significand.leading_zeros() as i64;
        match lead(self).cmp(&lead(other)) {
            Ordering::Equal => {}
            unequal => return unequal,
        }
        // Same leading position: exponents differ by less than 64.
        let base = self.exponent.min(other.exponent);
        let a = (self.significand as u128) << (self.exponent - base) as u32;
        let b = (other.significand as u128) << (other.exponent - base) as u32;
        a.cmp(&b)
    }
}

/// `2^exp` as an f64, including the subnormal range.
fn pow2(exp: i32) -> f64 {
    // Split so no intermediate under- or overflows before the final product.
    let half = exp / 2;
    f64::powi(2.0, half) * f64::powi(2.0, exp - half)
}

impl PartialEq for ExactValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ExactValue {}

impl PartialOrd for ExactValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactValue {
    fn cmp(&self, other: &Self) -> Ordering {
        let sign = |v: &ExactValue| if v.is_zero() { 0 } else if v.negative { -1 } else { 1 };
        match sign(self).cmp(&sign(other)) {
            Ordering::Equal => {}
            unequal => return unequal,
        }
        match sign(self) {
            0 => Ordering::Equal,
            1 => self.cmp_magnitude(other),
            _ => other.cmp_magnitude(self),
        }
    }
}

/// A bit pattern split into its fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodedValue {
    /// `-1` or `+1`.
    pub sign: i8,
    pub exponent_field: u64,
    pub mantissa_field: u64,
    pub value_class: FloatClass,
    /// Exact value for finite classes; `None` for infinities and NaNs.
    pub real_value: Option<ExactValue>,
}

pub fn decode(bits: u64, fmt: FlyteFormat) -> DecodedValue {
    let bits = bits & fmt.bit_mask();
    let negative = bits & fmt.sign_mask() != 0;
    let exponent_field = (bits & fmt.exponent_mask()) >> fmt.mantissa_bits;
    let mantissa_field = bits & fmt.mantissa_mask();
    let value_class = classify(bits, fmt);
    let unbiased = exponent_field as i32 - fmt.bias;
    let scale = fmt.mantissa_bits as i32;
    let real_value = match value_class {
        FloatClass::Normal => Some(ExactValue {
            negative,
            significand: (1u64 << fmt.mantissa_bits) | mantissa_field,
            exponent: unbiased - scale,
        }),
        FloatClass::Subnormal | FloatClass::PositiveZero | FloatClass::NegativeZero => {
            Some(ExactValue {
                negative,
                significand: mantissa_field,
                exponent: 1 - fmt.bias - scale,
            })
        }
        _ => None,
    };
    DecodedValue {
        sign: if negative { -1 } else { 1 },
        exponent_field,
        mantissa_field,
        value_class,
        real_value,
    }
}
