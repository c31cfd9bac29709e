//! Multibyte floating-point storage ("flytes").
//!
//! A flyte is an IEEE-754 binary32 or binary64 value with one or more
//! low-order mantissa bytes removed: `flyte16` and `flyte24` descend from
//! binary32, `flyte40`, `flyte48` and `flyte56` from binary64. Arithmetic
//! always happens in the parent type; flytes exist only in memory.
//!
//! - [`formats`]: format descriptors, classification and exact decoding.
//! - [`convert`]: widening and narrowing with four rounding modes.
//! - [`packed`]: unpadded element storage and the `FLYT` file container.
//! - [`simd`]: permute/blend plans that move whole vector blocks between
//!   parent-width lanes and packed bytes.
//! - [`kernels`]: BLAS-style kernels that compute in the parent type and
//!   store in the flyte format.

pub mod convert;
pub mod formats;
pub mod kernels;
pub mod native;
pub mod packed;
pub mod simd;

pub use convert::{narrow, round_decompose, widen, RoundDecomposition, RoundingMode};
pub use formats::{classify, decode, format_of, DecodedValue, ExactValue, FloatClass, FlyteFormat, FORMATS};
pub use kernels::{PackedMatrix, StorePolicy};
pub use native::Native;
pub use packed::PackedArray;
pub use simd::{Codec, PackPlan};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown format `{0}`")]
    UnknownFormat(String),
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("format mismatch: expected {expected}, got {actual}")]
    FormatMismatch { expected: FlyteFormat, actual: FlyteFormat },
    #[error("unsupported vector width of {0} bytes")]
    UnsupportedVectorBytes(usize),
    #[error("cannot allocate {0} bytes")]
    Allocation(usize),
    #[error("bad magic {0:02x?}, expected \"FLYT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown format id {0}")]
    UnknownFormatId(u8),
    #[error("truncated container: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
