//! The two hardware float types flytes are computed in.

use std::fmt::Debug;

use num_traits::Float;

use crate::FlyteFormat;

/// A native IEEE-754 type that can act as a flyte parent.
pub trait Native: Float + Default + Debug + Send + Sync + 'static {
    const PARENT_BITS: u32;
    /// The format describing this type itself (`f32` or `f64`).
    const FORMAT: FlyteFormat;

    fn to_raw(self) -> u64;
    fn from_raw(bits: u64) -> Self;
    fn from_f64(value: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Native for f32 {
    const PARENT_BITS: u32 = 32;
    const FORMAT: FlyteFormat = FlyteFormat::F32;

    #[inline(always)]
    fn to_raw(self) -> u64 {
        self.to_bits() as u64
    }

    #[inline(always)]
    fn from_raw(bits: u64) -> Self {
        f32::from_bits(bits as u32)
    }

    #[inline(always)]
    fn from_f64(value: f64) -> Self {
        value as f32
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Native for f64 {
    const PARENT_BITS: u32 = 64;
    const FORMAT: FlyteFormat = FlyteFormat::F64;

    #[inline(always)]
    fn to_raw(self) -> u64 {
        self.to_bits()
    }

    #[inline(always)]
    fn from_raw(bits: u64) -> Self {
        f64::from_bits(bits)
    }

    #[inline(always)]
    fn from_f64(value: f64) -> Self {
        value
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Fails unless `T` is the parent type of `fmt`.
pub(crate) fn check_parent<T: Native>(fmt: FlyteFormat) -> crate::Result<()> {
    if T::PARENT_BITS == fmt.parent_bits() {
        Ok(())
    } else {
        Err(crate::Error::FormatMismatch {
            expected: fmt.parent(),
            actual: T::FORMAT,
        })
    }
}
