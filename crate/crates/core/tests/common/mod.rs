//! Oracles shared by the integration tests. Nothing here calls `narrow`.
#![allow(dead_code)]

use flyte::simd::{Direction, PackPlan};
use flyte::{classify, decode, ExactValue, FloatClass, FlyteFormat, Native, PackedArray, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn magnitude_scaled(v: &ExactValue, base: i32) -> u128 {
    let shift = v.exponent - base;
    assert!((0..70).contains(&shift), "alignment shift {shift} out of range");
    (v.significand as u128) << shift
}

/// Exact value of a flyte pattern, reading an infinity as the next power of
/// two past the largest finite value (what an unbounded exponent would give).
fn candidate_value(bits: u64, fmt: FlyteFormat) -> ExactValue {
    match classify(bits, fmt) {
        FloatClass::PositiveInfinity | FloatClass::NegativeInfinity => ExactValue {
            negative: bits & fmt.sign_mask() != 0,
            significand: 1,
            exponent: ((1i32 << fmt.exponent_bits()) - 1) - fmt.bias(),
        },
        _ => decode(bits, fmt).real_value.expect("finite candidate"),
    }
}

/// The two flyte patterns bracketing a finite parent pattern in magnitude:
/// the truncation and the next pattern up. Flyte patterns of one sign are
/// ordered by magnitude, so these are the only rounding candidates.
fn bracket(x: u64, fmt: FlyteFormat) -> (u64, u64, ExactValue, ExactValue, ExactValue) {
    let parent = fmt.parent();
    let v = decode(x, parent).real_value.expect("finite input");
    let lo = x >> fmt.discarded_bits();
    let hi = lo + 1;
    let (lv, hv) = (candidate_value(lo, fmt), candidate_value(hi, fmt));
    assert!(lv.abs() <= v.abs() && v.abs() < hv.abs(), "bracket failed for {x:#x}");
    (lo, hi, v, lv, hv)
}

/// Round-to-nearest, ties-to-even, on exact values. Finite inputs only.
pub fn nearest_even_oracle(x: u64, fmt: FlyteFormat) -> u64 {
    if fmt.is_native() {
        return x;
    }
    let (lo, hi, v, lv, hv) = bracket(x, fmt);
    let base = v.exponent.min(lv.exponent).min(hv.exponent);
    let (v, lv, hv) = (magnitude_scaled(&v, base), magnitude_scaled(&lv, base), magnitude_scaled(&hv, base));
    let (below, above) = (v - lv, hv - v);
    match below.cmp(&above) {
        std::cmp::Ordering::Less => lo,
        std::cmp::Ordering::Greater => hi,
        std::cmp::Ordering::Equal => {
            if lo & 1 == 0 {
                lo
            } else {
                hi
            }
        }
    }
}

/// Largest-magnitude representable value not above the input. Finite only.
pub fn toward_zero_oracle(x: u64, fmt: FlyteFormat) -> u64 {
    if fmt.is_native() {
        return x;
    }
    bracket(x, fmt).0
}

/// Element `i` assembled byte by byte from the payload.
pub fn bytewise_element(array: &PackedArray, i: usize) -> u64 {
    let fmt = array.format();
    let width = fmt.bytes();
    let bytes = &array.payload()[i * width..(i + 1) * width];
    let flyte = bytes.iter().rev().fold(0u64, |acc, &b| (acc << 8) | b as u64);
    flyte << fmt.discarded_bits()
}

pub fn scalar_pack<T: Native>(fmt: FlyteFormat, src: &[T], mode: RoundingMode) -> PackedArray {
    let mut a = PackedArray::new(fmt, src.len()).unwrap();
    for (i, v) in src.iter().enumerate() {
        a.set(i, v.to_raw(), mode).unwrap();
    }
    a
}

pub fn scalar_unpack<T: Native>(a: &PackedArray) -> Vec<T> {
    (0..a.len()).map(|i| T::from_raw(a.get(i).unwrap())).collect()
}

/// Runs `plan` on distinct labels and checks every byte lands where the
/// packed layout says, with nothing lost, duplicated or reordered.
pub fn check_plan_symbolically(plan: &PackPlan) -> Result<(), String> {
    let fmt = plan.format();
    let (v, lanes) = (plan.vector_bytes(), plan.lanes_per_vector());
    let (parent, width) = (fmt.parent_bytes(), fmt.bytes());
    if plan.lane_vectors() * lanes * width != plan.packed_vectors() * v {
        return Err(format!("{fmt} V={v}: group arithmetic broken"));
    }
    let elements = plan.group_len();
    // Byte `t` of element `e` as it sits in a lane register / in the stream.
    let lane_cell = |e: usize, t: usize| (e / lanes) * v + (e % lanes) * parent + (parent - width) + t;
    let packed_cell = |e: usize, t: usize| e * width + t;
    let input: Vec<u32> = (1..=plan.input_len() as u32).collect();
    let output = plan.execute(&input, 0u32).map_err(|e| e.to_string())?;
    let mut expected = vec![0u32; plan.output_len()];
    for e in 0..elements {
        for t in 0..width {
            match plan.direction() {
                Direction::Pack => expected[packed_cell(e, t)] = input[lane_cell(e, t)],
                Direction::Unpack => expected[lane_cell(e, t)] = input[packed_cell(e, t)],
            }
        }
    }
    if output != expected {
        return Err(format!("{fmt} V={v} {:?}: byte permutation mismatch", plan.direction()));
    }
    Ok(())
}

/// Random parent pattern drawn so that every class shows up often.
pub fn special_heavy_pattern(rng: &mut impl Rng, fmt: FlyteFormat) -> u64 {
    let parent = fmt.parent();
    let sign = if rng.gen() { parent.sign_mask() } else { 0 };
    let exp_all = parent.exponent_mask();
    let mant = parent.mantissa_mask();
    let dropped = fmt.discarded_bits();
    let low = if dropped == 0 { 0 } else { (1u64 << dropped) - 1 };
    let body = match rng.gen_range(0..10) {
        0 => 0,
        1 => exp_all,
        2 => exp_all | (rng.gen::<u64>() & mant) | (1 << (parent.mantissa_bits() - 1)),
        3 => exp_all | (rng.gen::<u64>() & low).max(1),
        4 => rng.gen::<u64>() & mant,
        5 => exp_all - (1 << parent.mantissa_bits()) + mant,
        6 => {
            let half = if dropped == 0 { 0 } else { 1u64 << (dropped - 1) };
            let rest = [0, 1, half.saturating_sub(1), half, half + 1, low][rng.gen_range(0..6)] & low;
            ((rng.gen::<u64>() & !low) | rest) & !parent.sign_mask() & parent.bit_mask()
        }
        _ => rng.gen::<u64>() & !parent.sign_mask() & parent.bit_mask(),
    };
    sign | body
}

/// Uniform random finite parent pattern.
pub fn random_finite(rng: &mut impl Rng, fmt: FlyteFormat) -> u64 {
    let parent = fmt.parent();
    loop {
        let x = rng.gen::<u64>() & parent.bit_mask();
        if classify(x, parent).is_finite() {
            return x;
        }
    }
}

/// Finite patterns with a random kept prefix and a discarded field from
/// `{0, 1, half-1, half, half+1, max}`.
pub fn edge_corpus(rng: &mut impl Rng, fmt: FlyteFormat, prefixes: usize) -> Vec<u64> {
    let dropped = fmt.discarded_bits();
    if dropped == 0 {
        return Vec::new();
    }
    let half = 1u64 << (dropped - 1);
    let max = (1u64 << dropped) - 1;
    let mut out = Vec::with_capacity(prefixes * 6);
    while out.len() < prefixes * 6 {
        let prefix = random_finite(rng, fmt) & !max;
        for rest in [0, 1, half - 1, half, half + 1, max] {
            out.push(prefix | rest);
        }
    }
    out
}
