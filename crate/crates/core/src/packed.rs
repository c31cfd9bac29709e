//! Unpadded flyte arrays.
//!
//! Element `i` lives in bytes `[i * B, (i + 1) * B)` of the payload, where
//! `B` is the format width in bytes, stored little-endian. A few zero bytes
//! follow the last element so that a parent-width read starting at any
//! element stays inside the buffer; a scalar load is then one unaligned read
//! plus a mask and a shift.
//!
//! # Container format
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FLYT"
//! 4       1     version (1)
//! 5       1     format id (index into FORMATS)
//! 6       8     element count, little-endian u64
//! 14      n*B   element bytes (no tail pad)
//! ```

use std::io::{Read, Write};

use crate::convert::{narrow, widen, RoundingMode};
use crate::formats::FlyteFormat;
use crate::native::{check_parent, Native};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FLYT";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 14;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedArray {
    fmt: FlyteFormat,
    len: usize,
    payload: Vec<u8>,
}

/// Zero bytes kept after the last element.
pub const fn pad_bytes(fmt: FlyteFormat) -> usize {
    fmt.parent_bytes() - fmt.bytes()
}

/// In-memory footprint of `len` elements, tail pad included.
pub fn byte_size(fmt: FlyteFormat, len: usize) -> Option<usize> {
    len.checked_mul(fmt.bytes())?.checked_add(pad_bytes(fmt))
}

/// Elements between consecutive parent-aligned element starts.
pub fn alignment_period(fmt: FlyteFormat) -> usize {
    let (parent, total) = (fmt.parent_bits() as usize, fmt.total_bits() as usize);
    lcm(parent, total) / total
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

impl PackedArray {
    /// A zero-filled array of `len` elements.
    pub fn new(fmt: FlyteFormat, len: usize) -> Result<Self> {
        let size = byte_size(fmt, len).ok_or(Error::Allocation(usize::MAX))?;
        let mut payload = Vec::new();
        payload.try_reserve_exact(size).map_err(|_| Error::Allocation(size))?;
        payload.resize(size, 0);
        Ok(PackedArray { fmt, len, payload })
    }

    /// Narrows every value of `values` into a new array.
    pub fn from_values<T: Native>(fmt: FlyteFormat, values: &[T], mode: RoundingMode) -> Result<Self> {
        check_parent::<T>(fmt)?;
        let mut array = PackedArray::new(fmt, values.len())?;
        for (i, v) in values.iter().enumerate() {
            array.store(i, narrow(v.to_raw(), fmt, mode));
        }
        Ok(array)
    }

    /// Widens every element.
    pub fn to_values<T: Native>(&self) -> Result<Vec<T>> {
        check_parent::<T>(self.fmt)?;
        Ok((0..self.len).map(|i| T::from_raw(self.load(i))).collect())
    }

    pub fn format(&self) -> FlyteFormat {
        self.fmt
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Element bytes followed by the tail pad.
    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Element bytes only.
    pub fn data(&self) -> &[u8] {
        &self.payload[..self.len * self.fmt.bytes()]
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        let end = self.len * self.fmt.bytes();
        &mut self.payload[..end]
    }

    /// Parent pattern of element `i`.
    pub fn get(&self, i: usize) -> Result<u64> {
        self.check_index(i)?;
        Ok(self.load(i))
    }

    /// Narrows `parent_bits` with `mode` and stores it as element `i`.
    pub fn set(&mut self, i: usize, parent_bits: u64, mode: RoundingMode) -> Result<()> {
        self.check_index(i)?;
        self.store(i, narrow(parent_bits, self.fmt, mode));
        Ok(())
    }

    pub fn get_value<T: Native>(&self, i: usize) -> Result<T> {
        check_parent::<T>(self.fmt)?;
        self.get(i).map(T::from_raw)
    }

    pub fn set_value<T: Native>(&mut self, i: usize, value: T, mode: RoundingMode) -> Result<()> {
        check_parent::<T>(self.fmt)?;
        self.set(i, value.to_raw(), mode)
    }

    /// Flyte pattern of element `i`, as stored.
    pub fn raw(&self, i: usize) -> Result<u64> {
        self.check_index(i)?;
        Ok(self.read_parent_width(i * self.fmt.bytes()) & self.fmt.bit_mask())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index < self.len {
            Ok(())
        } else {
            Err(Error::IndexOutOfBounds { index, len: self.len })
        }
    }

    #[inline(always)]
    fn read_parent_width(&self, offset: usize) -> u64 {
        if self.fmt.parent_bytes() == 4 {
            let word: [u8; 4] = self.payload[offset..offset + 4].try_into().unwrap();
            u32::from_le_bytes(word) as u64
        } else {
            let word: [u8; 8] = self.payload[offset..offset + 8].try_into().unwrap();
            u64::from_le_bytes(word)
        }
    }

    #[inline(always)]
    pub(crate) fn load(&self, i: usize) -> u64 {
        let raw = self.read_parent_width(i * self.fmt.bytes()) & self.fmt.bit_mask();
        widen(raw, self.fmt)
    }

    #[inline(always)]
    pub(crate) fn store(&mut self, i: usize, flyte_bits: u64) {
        let width = self.fmt.bytes();
        let offset = i * width;
        self.payload[offset..offset + width].copy_from_slice(&flyte_bits.to_le_bytes()[..width]);
    }

    /// Writes the `FLYT` container.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<()> {
        let mut header = [0u8; HEADER_BYTES];
        header[..4].copy_from_slice(&MAGIC);
        header[4] = VERSION;
        header[5] = self.fmt.id();
        header[6..].copy_from_slice(&(self.len as u64).to_le_bytes());
        sink.write_all(&header)?;
        sink.write_all(self.data())?;
        sink.flush()?;
        Ok(())
    }

    /// Reads a `FLYT` container and restores the tail pad.
    pub fn load_from<R: Read>(mut source: R) -> Result<Self> {
        let mut header = [0u8; HEADER_BYTES];
        let got = read_fully(&mut source, &mut header)?;
        if got < 4 {
            return Err(Error::Truncated { expected: HEADER_BYTES as u64, actual: got as u64 });
        }
        let magic: [u8; 4] = header[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if got < HEADER_BYTES {
            return Err(Error::Truncated { expected: HEADER_BYTES as u64, actual: got as u64 });
        }
        if header[4] != VERSION {
            return Err(Error::UnsupportedVersion(header[4]));
        }
        let fmt = FlyteFormat::from_id(header[5]).ok_or(Error::UnknownFormatId(header[5]))?;
        let count = u64::from_le_bytes(header[6..].try_into().unwrap());
        let expected = count
            .checked_mul(fmt.bytes() as u64)
            .ok_or(Error::Allocation(usize::MAX))?;
        // Read before allocating the full array so a corrupt count cannot
        // trigger a huge allocation on its own.
        let mut data = Vec::new();
        let actual = source.by_ref().take(expected).read_to_end(&mut data)? as u64;
        if actual < expected {
            return Err(Error::Truncated { expected, actual });
        }
        let len = usize::try_from(count).map_err(|_| Error::Allocation(usize::MAX))?;
        data.try_reserve_exact(pad_bytes(fmt)).map_err(|_| Error::Allocation(data.len()))?;
        data.resize(data.len() + pad_bytes(fmt), 0);
        Ok(PackedArray { fmt, len, payload: data })
    }
}

fn read_fully<R: Read>(source: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::FORMATS;

    #[test]
    fn sizes() {
        assert_eq!(PackedArray::new(FlyteFormat::FLYTE24, 0).unwrap().payload().len(), 1);
        assert_eq!(
            PackedArray::new(FlyteFormat::FLYTE40, 1_000_000).unwrap().payload().len(),
            5_000_003
        );
        let f32s = PackedArray::new(FlyteFormat::F32, 4).unwrap();
        assert_eq!(f32s.payload().len(), 16);
        assert_eq!(pad_bytes(FlyteFormat::F32), 0);
        assert!(matches!(
            PackedArray::new(FlyteFormat::F64, usize::MAX / 4),
            Err(Error::Allocation(_))
        ));
    }

    #[test]
    fn periods() {
        assert_eq!(alignment_period(FlyteFormat::FLYTE24), 4);
        assert_eq!(alignment_period(FlyteFormat::FLYTE40), 8);
        assert_eq!(alignment_period(FlyteFormat::F32), 1);
        assert_eq!(alignment_period(FlyteFormat::FLYTE16), 2);
        assert_eq!(alignment_period(FlyteFormat::FLYTE48), 4);
        assert_eq!(alignment_period(FlyteFormat::FLYTE56), 8);
    }

    #[test]
    fn alignment_matches_byte_offsets() {
        for fmt in FORMATS {
            let period = alignment_period(fmt);
            for i in 0..64 {
                let aligned = (i * fmt.bytes()) % fmt.parent_bytes() == 0;
                assert_eq!(aligned, i % period == 0, "{fmt} element {i}");
            }
        }
    }

    #[test]
    fn get_examples() {
        let mut a = PackedArray::new(FlyteFormat::FLYTE24, 1).unwrap();
        a.data_mut().copy_from_slice(&[0x00, 0x80, 0x3F]);
        assert_eq!(a.get(0).unwrap(), 0x3F80_0000);

        let mut b = PackedArray::new(FlyteFormat::F32, 1).unwrap();
        b.set(0, 0x4000_0000, RoundingMode::TowardZero).unwrap();
        assert_eq!(b.get(0).unwrap(), 0x4000_0000);

        // Byte-wise assembly: element 1 is bytes [2, 4) = 00 C0.
        let mut c = PackedArray::new(FlyteFormat::FLYTE16, 2).unwrap();
        c.data_mut().copy_from_slice(&[0x80, 0x3F, 0x00, 0xC0]);
        assert_eq!(c.get(1).unwrap(), 0xC000_0000);
        assert_eq!(c.get_value::<f32>(1).unwrap(), -2.0);
        assert_eq!(c.raw(0).unwrap(), 0x3F80);
    }

    #[test]
    fn set_examples() {
        let mut a = PackedArray::new(FlyteFormat::FLYTE24, 3).unwrap();
        a.set_value(0, 1.0f32, RoundingMode::TowardZero).unwrap();
        assert_eq!(a.get(0).unwrap(), 1.0f32.to_bits() as u64);
        a.set(1, 0x3F80_0080, RoundingMode::NearestEvenExact).unwrap();
        assert_eq!(&a.data()[3..6], &[0x00, 0x80, 0x3F]);
        assert_eq!(a.get(0).unwrap(), 0x3F80_0000);
        assert_eq!(a.get(2).unwrap(), 0);
        assert_eq!(*a.payload().last().unwrap(), 0);
    }

    #[test]
    fn index_errors() {
        let mut a = PackedArray::new(FlyteFormat::FLYTE48, 2).unwrap();
        assert!(matches!(a.get(2), Err(Error::IndexOutOfBounds { index: 2, len: 2 })));
        assert!(a.set(5, 0, RoundingMode::TowardZero).is_err());
        assert!(matches!(a.get_value::<f32>(0), Err(Error::FormatMismatch { .. })));
    }

    #[test]
    fn empty_container_is_header_only() {
        let a = PackedArray::new(FlyteFormat::FLYTE24, 0).unwrap();
        let mut out = Vec::new();
        a.save(&mut out).unwrap();
        assert_eq!(out.len(), 14);
        assert_eq!(&out[..6], b"FLYT\x01\x01");
        assert_eq!(PackedArray::load_from(&out[..]).unwrap(), a);
    }

    #[test]
    fn container_errors() {
        let a = PackedArray::from_values(FlyteFormat::FLYTE40, &[1.0f64, -2.5], RoundingMode::TowardZero)
            .unwrap();
        let mut good = Vec::new();
        a.save(&mut good).unwrap();
        assert_eq!(good.len(), 14 + 10);

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(PackedArray::load_from(&bad[..]), Err(Error::BadMagic(m)) if &m == b"XXXX"));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(PackedArray::load_from(&bad[..]), Err(Error::UnsupportedVersion(2))));

        let mut bad = good.clone();
        bad[5] = 9;
        assert!(matches!(PackedArray::load_from(&bad[..]), Err(Error::UnknownFormatId(9))));

        let short = &good[..good.len() - 1];
        assert!(matches!(
            PackedArray::load_from(short),
            Err(Error::Truncated { expected: 10, actual: 9 })
        ));
        assert!(matches!(PackedArray::load_from(&good[..7]), Err(Error::Truncated { .. })));

        let mut huge = good[..14].to_vec();
        huge[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(PackedArray::load_from(&huge[..]).is_err());
    }
}
