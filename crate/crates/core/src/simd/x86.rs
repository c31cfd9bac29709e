//! SSSE3/SSE4.1 execution of 16-byte plans.
//!
//! Each routine is instantiated for the register counts of the format at
//! hand so the loops unroll and the registers never touch memory.

use std::arch::x86_64::*;

use super::{Direction, PackPlan, ZERO_LANE};

type Kernel = unsafe fn(&SseTables, *const u8, *mut u8);

pub(super) struct SseTables {
    pack_masks: [__m128i; 8],
    /// `pack_select[d][s]`: bytes of permuted lane register `s` that land in
    /// packed register `d`.
    pack_select: [[__m128i; 8]; 8],
    unpack_masks: [__m128i; 8],
    /// `unpack_select[d][s]`: bytes of packed register `s` gathered into
    /// lane register `d`.
    unpack_select: [[__m128i; 8]; 8],
    pack_fn: Kernel,
    unpack_fn: Kernel,
}

fn to_register(bytes: &[u8]) -> __m128i {
    let bytes: [u8; 16] = bytes.try_into().unwrap();
    // SAFETY: unaligned load from a 16-byte array; SSE2 is baseline on x86_64.
    unsafe { _mm_loadu_si128(bytes.as_ptr() as *const __m128i) }
}

fn zero() -> __m128i {
    // SAFETY: SSE2 is baseline on x86_64.
    unsafe { _mm_setzero_si128() }
}

fn tables(plan: &PackPlan) -> ([__m128i; 8], [[__m128i; 8]; 8]) {
    let mut masks = [zero(); 8];
    for (m, bytes) in masks.iter_mut().zip(plan.permute_masks()) {
        *m = to_register(bytes);
    }
    let mut select = [[zero(); 8]; 8];
    for step in plan.blend_steps() {
        let bytes: Vec<u8> = step.select.iter().map(|&s| if s { ZERO_LANE } else { 0 }).collect();
        // SAFETY: SSE2 is baseline on x86_64.
        select[step.dst][step.src] = unsafe { _mm_or_si128(select[step.dst][step.src], to_register(&bytes)) };
    }
    (masks, select)
}

/// Instantiations keyed by (element bytes, lanes per register).
fn kernels(width: usize, lanes: usize) -> Option<(Kernel, Kernel)> {
    Some(match (width, lanes) {
        (4, 4) => (pack::<4, 4>, unpack::<4, 4>),
        (2, 4) => (pack::<2, 4>, unpack::<2, 4>),
        (3, 4) => (pack::<3, 4>, unpack::<3, 4>),
        (8, 2) => (pack::<8, 2>, unpack::<8, 2>),
        (5, 2) => (pack::<5, 2>, unpack::<5, 2>),
        (6, 2) => (pack::<6, 2>, unpack::<6, 2>),
        (7, 2) => (pack::<7, 2>, unpack::<7, 2>),
        _ => return None,
    })
}

impl SseTables {
    pub(super) fn new(pack: &PackPlan, unpack: &PackPlan) -> Option<Self> {
        if pack.vector_bytes() != 16
            || !is_x86_feature_detected!("ssse3")
            || !is_x86_feature_detected!("sse4.1")
        {
            return None;
        }
        debug_assert_eq!(pack.direction(), Direction::Pack);
        debug_assert_eq!(unpack.direction(), Direction::Unpack);
        let (pack_fn, unpack_fn) = kernels(pack.format().bytes(), pack.lanes_per_vector())?;
        let (pack_masks, pack_select) = tables(pack);
        let (unpack_masks, unpack_select) = tables(unpack);
        Some(SseTables { pack_masks, pack_select, unpack_masks, unpack_select, pack_fn, unpack_fn })
    }

    /// # Safety
    /// `lanes` readable for `16 * lane_vectors` bytes, `dst` writable for
    /// `16 * packed_vectors`.
    #[inline(always)]
    pub(super) unsafe fn pack(&self, lanes: *const u8, dst: *mut u8) {
        (self.pack_fn)(self, lanes, dst)
    }

    /// # Safety
    /// As for [`SseTables::pack`] with the roles of the buffers swapped.
    #[inline(always)]
    pub(super) unsafe fn unpack(&self, src: *const u8, lanes: *mut u8) {
        (self.unpack_fn)(self, src, lanes)
    }
}

/// Register counts and blend source ranges for `B`-byte elements, `L` per
/// lane register, all evaluated at compile time.
struct Shape<const B: usize, const L: usize>;

impl<const B: usize, const L: usize> Shape<B, L> {
    const N_IN: usize = {
        let mut n = 1;
        while !(n * L * B).is_multiple_of(16) {
            n += 1;
        }
        n
    };
    const N_OUT: usize = Self::N_IN * L * B / 16;

    /// Lane registers holding elements that overlap packed register `d`.
    const PACK_SOURCES: [(usize, usize); 8] = {
        let mut r = [(0, 0); 8];
        let mut d = 0;
        while d < Self::N_OUT {
            r[d] = (16 * d / B / L, (16 * d + 15) / B / L + 1);
            d += 1;
        }
        r
    };

    /// Packed registers covering the elements of lane register `k`.
    const UNPACK_SOURCES: [(usize, usize); 8] = {
        let mut r = [(0, 0); 8];
        let mut k = 0;
        while k < Self::N_IN {
            r[k] = (k * L * B / 16, ((k + 1) * L * B - 1) / 16 + 1);
            k += 1;
        }
        r
    };
}

#[allow(clippy::needless_range_loop)]
#[target_feature(enable = "ssse3,sse4.1")]
unsafe fn pack<const B: usize, const L: usize>(t: &SseTables, lanes: *const u8, dst: *mut u8) {
    let mut permuted = [_mm_setzero_si128(); 8];
    for k in 0..Shape::<B, L>::N_IN {
        let v = _mm_loadu_si128(lanes.add(16 * k) as *const __m128i);
        permuted[k] = _mm_shuffle_epi8(v, t.pack_masks[k]);
    }
    for d in 0..Shape::<B, L>::N_OUT {
        let (first, end) = Shape::<B, L>::PACK_SOURCES[d];
        let mut out = _mm_setzero_si128();
        for s in first..end {
            out = _mm_blendv_epi8(out, permuted[s], t.pack_select[d][s]);
        }
        _mm_storeu_si128(dst.add(16 * d) as *mut __m128i, out);
    }
}

#[allow(clippy::needless_range_loop)]
#[target_feature(enable = "ssse3,sse4.1")]
unsafe fn unpack<const B: usize, const L: usize>(t: &SseTables, src: *const u8, lanes: *mut u8) {
    let mut packed = [_mm_setzero_si128(); 8];
    for o in 0..Shape::<B, L>::N_OUT {
        packed[o] = _mm_loadu_si128(src.add(16 * o) as *const __m128i);
    }
    for k in 0..Shape::<B, L>::N_IN {
        let (first, end) = Shape::<B, L>::UNPACK_SOURCES[k];
        let mut gathered = _mm_setzero_si128();
        for s in first..end {
            gathered = _mm_blendv_epi8(gathered, packed[s], t.unpack_select[k][s]);
        }
        let v = _mm_shuffle_epi8(gathered, t.unpack_masks[k]);
        _mm_storeu_si128(lanes.add(16 * k) as *mut __m128i, v);
    }
}
