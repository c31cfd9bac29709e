//! Vector-block packing and unpacking of flyte arrays.
//!
//! A [`PackPlan`] moves a group of parent-width lanes held in `n_in` vector
//! registers to `n_out` registers of densely packed flyte bytes (or back).
//! Packing is two-phase: each lane register is permuted so its significant
//! bytes land in memory order, rotated to start at the first free byte of
//! the packed stream, then the permuted registers are blended together into
//! full output registers. Unpacking runs the same schedule in reverse: blend
//! the packed registers that overlap a lane register's span, then permute.
//!
//! A group covers `n_in * L` elements, `L = V / parent_bytes`, and exactly
//! `n_out * V` packed bytes, so successive groups are written with
//! consecutive, non-overlapping full-width stores. Elements are free to
//! straddle register boundaries. Whatever does not fill a whole group goes
//! through the scalar [`PackedArray`] path.
//!
//! Plans only use byte shuffles (with zeroing) and per-byte selects. The
//! portable executor and the x86 SSSE3/SSE4.1 one produce identical bytes.

use std::ops::Range;

use crate::convert::{narrow, widen, RoundingMode};
use crate::formats::FlyteFormat;
use crate::native::{check_parent, Native};
use crate::packed::PackedArray;
use crate::{Error, Result};

#[cfg(target_arch = "x86_64")]
mod x86;

/// Shuffle-table entry that produces a zero byte.
pub const ZERO_LANE: u8 = 0x80;

/// Largest vector width a plan can describe: shuffle indices must stay
/// below [`ZERO_LANE`] and a group must fit in 64 lanes.
pub const MAX_VECTOR_BYTES: usize = 64;

pub const DEFAULT_VECTOR_BYTES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Lanes to packed bytes: permute, then blend.
    Pack,
    /// Packed bytes to lanes: blend, then permute.
    Unpack,
}

/// `dst[p] = src[p]` for every byte `p` with `select[p]` set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlendStep {
    pub dst: usize,
    pub src: usize,
    pub select: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackPlan {
    fmt: FlyteFormat,
    direction: Direction,
    vector_bytes: usize,
    lanes_per_vector: usize,
    lane_vectors: usize,
    packed_vectors: usize,
    permute_masks: Vec<Vec<u8>>,
    blend_steps: Vec<BlendStep>,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Packed-stream byte offset of byte `t` of element `j` of lane register `k`,
/// and the register offset that byte occupies as a lane.
struct ByteMap {
    parent: usize,
    width: usize,
    lanes: usize,
}

impl ByteMap {
    fn for_each(&self, k: usize, mut f: impl FnMut(usize, usize)) {
        for j in 0..self.lanes {
            for t in 0..self.width {
                let global = (k * self.lanes + j) * self.width + t;
                let lane_byte = j * self.parent + (self.parent - self.width) + t;
                f(global, lane_byte);
            }
        }
    }
}

impl PackPlan {
    fn build(fmt: FlyteFormat, vector_bytes: usize, direction: Direction) -> Result<Self> {
        let parent = fmt.parent_bytes();
        let width = fmt.bytes();
        if !vector_bytes.is_power_of_two() || vector_bytes < parent || vector_bytes > MAX_VECTOR_BYTES {
            return Err(Error::UnsupportedVectorBytes(vector_bytes));
        }
        let v = vector_bytes;
        let lanes = v / parent;
        let lane_vectors = v / gcd(lanes * width, v);
        let packed_vectors = lane_vectors * lanes * width / v;
        let map = ByteMap { parent, width, lanes };

        let mut permute_masks = Vec::with_capacity(lane_vectors);
        let mut blend_steps = Vec::new();
        for k in 0..lane_vectors {
            // A lane register holds at most V significant bytes, so reducing
            // stream offsets mod V never collides.
            let mut mask = vec![ZERO_LANE; v];
            map.for_each(k, |global, lane_byte| match direction {
                Direction::Pack => mask[global % v] = lane_byte as u8,
                Direction::Unpack => mask[lane_byte] = (global % v) as u8,
            });
            permute_masks.push(mask);

            let span = k * lanes * width..(k + 1) * lanes * width;
            for o in span.start / v..=(span.end - 1) / v {
                let select: Vec<bool> = (0..v).map(|p| span.contains(&(o * v + p))).collect();
                blend_steps.push(match direction {
                    Direction::Pack => BlendStep { dst: o, src: k, select },
                    Direction::Unpack => BlendStep { dst: k, src: o, select },
                });
            }
        }
        Ok(PackPlan {
            fmt,
            direction,
            vector_bytes: v,
            lanes_per_vector: lanes,
            lane_vectors,
            packed_vectors,
            permute_masks,
            blend_steps,
        })
    }

    pub fn format(&self) -> FlyteFormat {
        self.fmt
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn vector_bytes(&self) -> usize {
        self.vector_bytes
    }

    /// Parent lanes per register (the vectorization factor).
    pub fn lanes_per_vector(&self) -> usize {
        self.lanes_per_vector
    }

    /// Registers of parent lanes per group (`n_in`).
    pub fn lane_vectors(&self) -> usize {
        self.lane_vectors
    }

    /// Registers of packed bytes per group (`n_out`).
    pub fn packed_vectors(&self) -> usize {
        self.packed_vectors
    }

    /// Elements per group.
    pub fn group_len(&self) -> usize {
        self.lane_vectors * self.lanes_per_vector
    }

    /// Packed bytes per group.
    pub fn group_bytes(&self) -> usize {
        self.packed_vectors * self.vector_bytes
    }

    /// One shuffle table per lane register; entries are source byte indices
    /// or [`ZERO_LANE`].
    pub fn permute_masks(&self) -> &[Vec<u8>] {
        &self.permute_masks
    }

    pub fn blend_steps(&self) -> &[BlendStep] {
        &self.blend_steps
    }

    pub fn input_len(&self) -> usize {
        match self.direction {
            Direction::Pack => self.lane_vectors * self.vector_bytes,
            Direction::Unpack => self.group_bytes(),
        }
    }

    pub fn output_len(&self) -> usize {
        match self.direction {
            Direction::Pack => self.group_bytes(),
            Direction::Unpack => self.lane_vectors * self.vector_bytes,
        }
    }

    /// Runs the plan over arbitrary byte-sized cells. With distinct labels
    /// as input this shows exactly where every byte goes.
    pub fn execute<T: Copy>(&self, input: &[T], zero: T) -> Result<Vec<T>> {
        if input.len() != self.input_len() {
            return Err(Error::LengthMismatch { expected: self.input_len(), actual: input.len() });
        }
        let mut output = vec![zero; self.output_len()];
        let mut scratch = vec![zero; self.lane_vectors * self.vector_bytes];
        self.execute_into(input, zero, &mut scratch, &mut output);
        Ok(output)
    }

    /// `scratch` holds `n_in` registers; no length checks.
    fn execute_into<T: Copy>(&self, input: &[T], zero: T, scratch: &mut [T], output: &mut [T]) {
        let v = self.vector_bytes;
        match self.direction {
            Direction::Pack => {
                for (k, mask) in self.permute_masks.iter().enumerate() {
                    shuffle(&input[k * v..(k + 1) * v], mask, zero, &mut scratch[k * v..(k + 1) * v]);
                }
                output.fill(zero);
                for step in &self.blend_steps {
                    blend(&mut output[step.dst * v..(step.dst + 1) * v], &scratch[step.src * v..], &step.select);
                }
            }
            Direction::Unpack => {
                scratch.fill(zero);
                for step in &self.blend_steps {
                    blend(&mut scratch[step.dst * v..(step.dst + 1) * v], &input[step.src * v..], &step.select);
                }
                for (k, mask) in self.permute_masks.iter().enumerate() {
                    shuffle(&scratch[k * v..(k + 1) * v], mask, zero, &mut output[k * v..(k + 1) * v]);
                }
            }
        }
    }
}

fn shuffle<T: Copy>(src: &[T], mask: &[u8], zero: T, dst: &mut [T]) {
    for (d, &m) in dst.iter_mut().zip(mask) {
        *d = if m & ZERO_LANE != 0 { zero } else { src[m as usize] };
    }
}

fn blend<T: Copy>(dst: &mut [T], src: &[T], select: &[bool]) {
    for ((d, &s), &take) in dst.iter_mut().zip(src).zip(select) {
        if take {
            *d = s;
        }
    }
}

pub fn build_pack_plan(fmt: FlyteFormat, vector_bytes: usize) -> Result<PackPlan> {
    PackPlan::build(fmt, vector_bytes, Direction::Pack)
}

pub fn build_unpack_plan(fmt: FlyteFormat, vector_bytes: usize) -> Result<PackPlan> {
    PackPlan::build(fmt, vector_bytes, Direction::Unpack)
}

/// Rounds every parent-pattern lane with `mode` and packs the group.
/// Portable reference execution of a pack plan.
pub fn pack_block(plan: &PackPlan, lanes: &[u64], mode: RoundingMode) -> Result<Vec<u8>> {
    if plan.direction != Direction::Pack {
        return Err(Error::ShapeMismatch("pack_block needs a pack plan".into()));
    }
    if lanes.len() != plan.group_len() {
        return Err(Error::LengthMismatch { expected: plan.group_len(), actual: lanes.len() });
    }
    let fmt = plan.fmt;
    let parent = fmt.parent_bytes();
    let mut registers = Vec::with_capacity(plan.input_len());
    for &lane in lanes {
        let rounded = widen(narrow(lane, fmt, mode), fmt);
        registers.extend_from_slice(&rounded.to_le_bytes()[..parent]);
    }
    plan.execute(&registers, 0u8)
}

/// Unpacks one group of packed bytes into parent patterns.
pub fn unpack_block(plan: &PackPlan, bytes: &[u8]) -> Result<Vec<u64>> {
    if plan.direction != Direction::Unpack {
        return Err(Error::ShapeMismatch("unpack_block needs an unpack plan".into()));
    }
    let registers = plan.execute(bytes, 0u8)?;
    let parent = plan.fmt.parent_bytes();
    Ok(registers
        .chunks_exact(parent)
        .map(|lane| {
            let mut word = [0u8; 8];
            word[..parent].copy_from_slice(lane);
            u64::from_le_bytes(word)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Portable,
    /// 16-byte registers with `pshufb` and `pblendvb`.
    Sse41,
}

/// A pack plan and an unpack plan for one format and vector width, bound to
/// an execution backend. Block and stream operations are reentrant.
pub struct Codec {
    pack: PackPlan,
    unpack: PackPlan,
    backend: Backend,
    #[cfg(target_arch = "x86_64")]
    sse: Option<x86::SseTables>,
}

impl Codec {
    /// Uses the fastest backend available on this host.
    pub fn new(fmt: FlyteFormat, vector_bytes: usize) -> Result<Self> {
        let mut codec = Codec::portable(fmt, vector_bytes)?;
        #[cfg(target_arch = "x86_64")]
        {
            codec.sse = x86::SseTables::new(&codec.pack, &codec.unpack);
            if codec.sse.is_some() {
                codec.backend = Backend::Sse41;
            }
        }
        Ok(codec)
    }

    /// Same plans, executed by the portable shuffle/blend interpreter.
    pub fn portable(fmt: FlyteFormat, vector_bytes: usize) -> Result<Self> {
        Ok(Codec {
            pack: build_pack_plan(fmt, vector_bytes)?,
            unpack: build_unpack_plan(fmt, vector_bytes)?,
            backend: Backend::Portable,
            #[cfg(target_arch = "x86_64")]
            sse: None,
        })
    }

    pub fn format(&self) -> FlyteFormat {
        self.pack.fmt
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn pack_plan(&self) -> &PackPlan {
        &self.pack
    }

    pub fn unpack_plan(&self) -> &PackPlan {
        &self.unpack
    }

    pub fn group_len(&self) -> usize {
        self.pack.group_len()
    }

    pub fn group_bytes(&self) -> usize {
        self.pack.group_bytes()
    }

    /// Rounds and packs exactly one group. `dst.len()` must equal
    /// [`Codec::group_bytes`].
    #[inline]
    pub fn pack_group<T: Native>(&self, lanes: &[T], mode: RoundingMode, dst: &mut [u8]) -> Result<()> {
        check_parent::<T>(self.format())?;
        self.check_group(lanes.len(), dst.len())?;
        self.pack_group_unchecked(lanes, mode, dst);
        Ok(())
    }

    /// Unpacks exactly one group. `lanes.len()` must equal
    /// [`Codec::group_len`].
    #[inline]
    pub fn unpack_group<T: Native>(&self, src: &[u8], lanes: &mut [T]) -> Result<()> {
        check_parent::<T>(self.format())?;
        self.check_group(lanes.len(), src.len())?;
        self.unpack_group_unchecked(src, lanes);
        Ok(())
    }

    fn check_group(&self, lanes: usize, bytes: usize) -> Result<()> {
        if lanes != self.group_len() {
            return Err(Error::LengthMismatch { expected: self.group_len(), actual: lanes });
        }
        if bytes != self.group_bytes() {
            return Err(Error::LengthMismatch { expected: self.group_bytes(), actual: bytes });
        }
        Ok(())
    }

    /// Lengths already checked; `T` is the parent type.
    #[inline]
    pub(crate) fn pack_group_unchecked<T: Native>(&self, lanes: &[T], mode: RoundingMode, dst: &mut [u8]) {
        let fmt = self.format();
        // Truncation needs no lane work: the permute drops the low bytes.
        if mode == RoundingMode::TowardZero || fmt.is_native() {
            self.pack_lanes(lanes, dst);
        } else {
            let mut rounded = [T::zero(); MAX_VECTOR_BYTES];
            for (r, &lane) in rounded.iter_mut().zip(lanes) {
                *r = T::from_raw(widen(narrow(lane.to_raw(), fmt, mode), fmt));
            }
            self.pack_lanes(&rounded[..lanes.len()], dst);
        }
    }

    #[inline(always)]
    fn pack_lanes<T: Native>(&self, lanes: &[T], dst: &mut [u8]) {
        #[cfg(target_arch = "x86_64")]
        if let Some(sse) = &self.sse {
            // SAFETY: the tables exist only when SSSE3 and SSE4.1 were
            // detected; `lanes` covers n_in registers and `dst` n_out.
            unsafe { sse.pack(lanes.as_ptr() as *const u8, dst.as_mut_ptr()) };
            return;
        }
        self.pack_portable(lanes, dst);
    }

    #[inline]
    pub(crate) fn unpack_group_unchecked<T: Native>(&self, src: &[u8], lanes: &mut [T]) {
        #[cfg(target_arch = "x86_64")]
        if let Some(sse) = &self.sse {
            // SAFETY: as in `pack_group_unchecked`.
            unsafe { sse.unpack(src.as_ptr(), lanes.as_mut_ptr() as *mut u8) };
            return;
        }
        self.unpack_portable(src, lanes);
    }

    fn pack_portable<T: Native>(&self, lanes: &[T], dst: &mut [u8]) {
        let parent = self.format().parent_bytes();
        let mut registers = [0u8; MAX_VECTOR_BYTES * 8];
        let mut scratch = [0u8; MAX_VECTOR_BYTES * 8];
        for (chunk, lane) in registers.chunks_exact_mut(parent).zip(lanes) {
            chunk.copy_from_slice(&lane.to_raw().to_le_bytes()[..parent]);
        }
        let n = self.pack.input_len();
        self.pack.execute_into(&registers[..n], 0, &mut scratch[..n], dst);
    }

    fn unpack_portable<T: Native>(&self, src: &[u8], lanes: &mut [T]) {
        let parent = self.format().parent_bytes();
        let mut registers = [0u8; MAX_VECTOR_BYTES * 8];
        let mut scratch = [0u8; MAX_VECTOR_BYTES * 8];
        let n = self.unpack.output_len();
        self.unpack.execute_into(src, 0, &mut scratch[..n], &mut registers[..n]);
        for (lane, chunk) in lanes.iter_mut().zip(registers.chunks_exact(parent)) {
            let mut word = [0u8; 8];
            word[..parent].copy_from_slice(chunk);
            *lane = T::from_raw(u64::from_le_bytes(word));
        }
    }

    fn check_stream<T: Native>(&self, array: &PackedArray, values: usize) -> Result<()> {
        check_parent::<T>(self.format())?;
        if array.format() != self.format() {
            return Err(Error::FormatMismatch { expected: self.format(), actual: array.format() });
        }
        if array.len() != values {
            return Err(Error::LengthMismatch { expected: array.len(), actual: values });
        }
        Ok(())
    }

    /// Rounds `src` into `dst` element by element: whole groups through the
    /// vector path, the remainder through [`PackedArray::set`].
    pub fn pack_stream<T: Native>(&self, dst: &mut PackedArray, src: &[T], mode: RoundingMode) -> Result<()> {
        self.check_stream::<T>(dst, src.len())?;
        let (group, group_bytes) = (self.group_len(), self.group_bytes());
        let full = src.len() / group;
        for (lanes, out) in src[..full * group]
            .chunks_exact(group)
            .zip(dst.data_mut().chunks_exact_mut(group_bytes))
        {
            self.pack_group_unchecked(lanes, mode, out);
        }
        for (i, v) in src.iter().enumerate().skip(full * group) {
            dst.set(i, v.to_raw(), mode)?;
        }
        Ok(())
    }

    /// Widens every element of `src` into `dst`.
    pub fn unpack_stream<T: Native>(&self, src: &PackedArray, dst: &mut [T]) -> Result<()> {
        self.check_stream::<T>(src, dst.len())?;
        let (group, group_bytes) = (self.group_len(), self.group_bytes());
        let full = dst.len() / group;
        for (bytes, lanes) in src
            .data()
            .chunks_exact(group_bytes)
            .zip(dst[..full * group].chunks_exact_mut(group))
        {
            self.unpack_group_unchecked(bytes, lanes);
        }
        for (i, v) in dst.iter_mut().enumerate().skip(full * group) {
            *v = T::from_raw(src.get(i)?);
        }
        Ok(())
    }

    /// Byte ranges written by the vector stores of a `len`-element
    /// [`Codec::pack_stream`], in store order. The scalar tail is not
    /// included.
    pub fn store_ranges(&self, len: usize) -> impl Iterator<Item = Range<usize>> {
        let v = self.pack.vector_bytes;
        let stores = len / self.group_len() * self.pack.packed_vectors;
        (0..stores).map(move |s| s * v..(s + 1) * v)
    }
}
