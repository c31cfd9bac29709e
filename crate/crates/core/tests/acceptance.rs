//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use flyte::kernels::{self, reference};
use flyte::packed::byte_size;
use flyte::simd::{build_pack_plan, build_unpack_plan, Codec};
use flyte::{
    classify, narrow, widen, Error, FloatClass, FlyteFormat, Native, PackedArray, PackedMatrix, RoundingMode,
    StorePolicy, FORMATS,
};
use rand::Rng;

use common::{
    check_plan_symbolically, edge_corpus, nearest_even_oracle, random_finite, rng, scalar_pack, scalar_unpack,
    special_heavy_pattern,
};

use RoundingMode::{NearestEvenExact as NE, NearestHeuristic as NH, ToOdd as TO, TowardZero as TZ};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Splits `0..n` over the available cores; each worker gets its own seed.
fn parallel<F>(n: u64, seed: u64, work: F) -> Result<(), String>
where
    F: Fn(u64, u64, &mut rand_chacha::ChaCha8Rng) -> Result<(), String> + Sync,
{
    let workers = std::thread::available_parallelism().map_or(4, |p| p.get()) as u64;
    let chunk = n.div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let work = &work;
                s.spawn(move || {
                    let mut r = rng(seed ^ (w + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    work(w * chunk, ((w + 1) * chunk).min(n), &mut r)
                })
            })
            .collect();
        handles.into_iter().try_for_each(|h| h.join().expect("worker panicked"))
    })
}

fn criterion_1() -> Outcome {
    for fmt in [FlyteFormat::FLYTE16, FlyteFormat::FLYTE24] {
        parallel(1 << fmt.total_bits(), 0, |start, end, _| {
            for f in start..end {
                for mode in RoundingMode::ALL {
                    let back = narrow(widen(f, fmt), fmt, mode);
                    ensure(back == f, || format!("{fmt} {f:#x} {mode} -> {back:#x}"))?;
                }
            }
            Ok(())
        })?;
    }
    Ok("2^16 + 2^24 patterns x 4 modes".into())
}

fn criterion_2() -> Outcome {
    const N: u64 = 10_000_000;
    for fmt in FORMATS {
        let low = ((1u128 << fmt.discarded_bits()) - 1) as u64;
        let mask = fmt.parent().bit_mask();
        parallel(N, fmt.id() as u64, |start, end, r| {
            for _ in start..end {
                let x = r.gen::<u64>() & mask;
                let y = widen(narrow(x, fmt, TZ), fmt);
                ensure(y == x & !low, || format!("{fmt} {x:#x} -> {y:#x}"))?;
            }
            Ok(())
        })?;
    }
    Ok(format!("{N} patterns x {} formats", FORMATS.len()))
}

/// Where the heuristic is allowed to differ from the exact rounding.
fn heuristic_may_differ(x: u64, fmt: FlyteFormat) -> bool {
    let dropped = fmt.discarded_bits();
    if dropped == 0 {
        return false;
    }
    let half = 1u64 << (dropped - 1);
    let rest = x & ((1u64 << dropped) - 1);
    let kept = x >> dropped;
    if classify(x, fmt.parent()).is_nan() {
        kept & fmt.mantissa_mask() == fmt.mantissa_mask() && rest >= half
    } else {
        rest == half && kept & 1 == 0
    }
}

fn check_divergence(x: u64, fmt: FlyteFormat) -> Result<(), String> {
    let (exact, heuristic) = (narrow(x, fmt, NE), narrow(x, fmt, NH));
    let expected_differ = heuristic_may_differ(x, fmt);
    ensure((exact != heuristic) == expected_differ, || {
        format!("{fmt} {x:#x}: exact {exact:#x} heuristic {heuristic:#x}")
    })?;
    if expected_differ && classify(x, fmt.parent()).is_finite() {
        ensure(heuristic == exact + 1, || format!("{fmt} {x:#x}: heuristic not kept+1"))?;
    }
    Ok(())
}

fn criterion_3() -> Outcome {
    const N: u64 = 10_000_000;
    const PREFIXES: usize = 10_000;
    let mut ties = 0usize;
    let mut nan_edges = 0usize;
    for fmt in FORMATS {
        parallel(N, 100 + fmt.id() as u64, |start, end, r| {
            for _ in start..end {
                let x = random_finite(r, fmt);
                let got = narrow(x, fmt, NE);
                let want = nearest_even_oracle(x, fmt);
                ensure(got == want, || format!("{fmt} {x:#x}: {got:#x} != oracle {want:#x}"))?;
                check_divergence(x, fmt)?;
                // NaN probe: same kept/rest split, exponent forced all ones.
                let nan = x | fmt.parent().exponent_mask();
                if classify(nan, fmt.parent()).is_nan() {
                    check_divergence(nan, fmt)?;
                }
            }
            Ok(())
        })?;
        let mut r = rng(200 + fmt.id() as u64);
        for x in edge_corpus(&mut r, fmt, PREFIXES) {
            let (got, want) = (narrow(x, fmt, NE), nearest_even_oracle(x, fmt));
            ensure(got == want, || format!("{fmt} edge {x:#x}: {got:#x} != oracle {want:#x}"))?;
            check_divergence(x, fmt)?;
            ties += heuristic_may_differ(x, fmt) as usize;
            let nan = x | fmt.parent().exponent_mask();
            if classify(nan, fmt.parent()).is_nan() {
                check_divergence(nan, fmt)?;
            }
        }
        // NaNs right at the all-ones boundary.
        if fmt.discarded_bits() > 0 {
            let parent = fmt.parent();
            let half = 1u64 << (fmt.discarded_bits() - 1);
            let top = parent.exponent_mask() | parent.mantissa_mask();
            for sign in [0, parent.sign_mask()] {
                for x in [top, top - half + 1, top - half, top - half - 1, top & !(2 * half - 1)] {
                    let x = sign | x;
                    check_divergence(x, fmt)?;
                    nan_edges += heuristic_may_differ(x, fmt) as usize;
                }
            }
        }
    }
    ensure(ties > 0 && nan_edges > 0, || "divergence set never exercised".into())?;
    Ok(format!("{N} random + 6x{PREFIXES} edge per format; {ties} even ties, {nan_edges} NaN edges diverge as expected"))
}

fn criterion_4() -> Outcome {
    use FloatClass::*;
    let mut checked = 0;
    let mut check = |x: u64, fmt: FlyteFormat, mode: RoundingMode, allowed: &[FloatClass]| -> Result<(), String> {
        checked += 1;
        let out = narrow(x, fmt, mode);
        let class = classify(out, fmt);
        ensure(allowed.contains(&class), || format!("{fmt} {x:#x} {mode}: {class:?} not in {allowed:?}"))
    };
    for fmt in FORMATS {
        let p = fmt.parent();
        let (inf, sign) = (p.exponent_mask(), p.sign_mask());
        let quiet_bit = 1u64 << (p.mantissa_bits() - 1);
        for mode in RoundingMode::ALL {
            check(inf, fmt, mode, &[PositiveInfinity])?;
            check(sign | inf, fmt, mode, &[NegativeInfinity])?;
        }
        for mode in [TZ, NE] {
            for payload in [0, 1, p.mantissa_mask() >> 1, quiet_bit - 1] {
                for s in [0, sign] {
                    check(s | inf | quiet_bit | payload, fmt, mode, &[QuietNaN])?;
                }
            }
        }
        let min_normal = 1u64 << p.mantissa_bits();
        for sub in [1, 0xFF, p.mantissa_mask() >> 1, p.mantissa_mask(), p.mantissa_mask() - 1] {
            for s in [0, sign] {
                let z = if s == 0 { PositiveZero } else { NegativeZero };
                check(s | sub, fmt, TZ, &[Subnormal, z])?;
                check(s | sub, fmt, NE, &[z, Subnormal, Normal])?;
                let out = widen(narrow(s | sub, fmt, NE), fmt) & !sign;
                ensure(out <= min_normal, || format!("{fmt} {sub:#x}: rounded past smallest normal"))?;
            }
        }
        // Largest finite parent value: exponent reaches all ones only when
        // rounding up.
        let max = inf - 1;
        if fmt.discarded_bits() > 0 {
            check(max, fmt, NE, &[PositiveInfinity])?;
            check(sign | max, fmt, NE, &[NegativeInfinity])?;
            check(max, fmt, TZ, &[Normal])?;
            check(max, fmt, TO, &[Normal])?;
        }
    }
    // Signalling NaN whose payload sits entirely in the discarded byte.
    for fmt in [FlyteFormat::FLYTE24, FlyteFormat::FLYTE16] {
        check(0x7F80_00FF, fmt, TZ, &[PositiveInfinity])?;
    }
    ensure(narrow(0x7F80_00FF, FlyteFormat::FLYTE24, TZ) == 0x7F8000, || "0x7F8000FF".into())?;
    Ok(format!("{checked} table entries"))
}

fn stream_equivalence<T: Native>(codec: &Codec, len: usize, mode: RoundingMode, r: &mut impl Rng) -> Result<(), String> {
    let fmt = codec.format();
    let src: Vec<T> = (0..len).map(|_| T::from_raw(special_heavy_pattern(r, fmt))).collect();
    let mut packed = PackedArray::new(fmt, len).map_err(|e| e.to_string())?;
    codec.pack_stream(&mut packed, &src, mode).map_err(|e| e.to_string())?;
    let scalar = scalar_pack(fmt, &src, mode);
    ensure(packed == scalar, || format!("{fmt} {:?} len {len} {mode}: pack differs", codec.backend()))?;
    let mut out = vec![T::zero(); len];
    codec.unpack_stream(&scalar, &mut out).map_err(|e| e.to_string())?;
    let expected = scalar_unpack::<T>(&scalar);
    let same = out.iter().zip(&expected).all(|(a, b)| a.to_raw() == b.to_raw());
    ensure(same, || format!("{fmt} {:?} len {len}: unpack differs", codec.backend()))
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let mut cases = 0;
    for fmt in FORMATS {
        for v in [16, 32] {
            for plan in [build_pack_plan(fmt, v).unwrap(), build_unpack_plan(fmt, v).unwrap()] {
                check_plan_symbolically(&plan)?;
                let (l, b) = (plan.lanes_per_vector(), fmt.bytes());
                ensure(plan.lane_vectors() * l * b == plan.packed_vectors() * v, || format!("{fmt} V={v} arithmetic"))?;
            }
            for codec in [Codec::new(fmt, v).unwrap(), Codec::portable(fmt, v).unwrap()] {
                for mode in RoundingMode::ALL {
                    for len in 0..=1000 {
                        if fmt.parent_bits() == 32 {
                            stream_equivalence::<f32>(&codec, len, mode, &mut r)?;
                        } else {
                            stream_equivalence::<f64>(&codec, len, mode, &mut r)?;
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{cases} stream cases, 28 plans"))
}

fn criterion_6() -> Outcome {
    let a = PackedArray::new(FlyteFormat::FLYTE40, 1_000_000).map_err(|e| e.to_string())?;
    ensure(a.payload().len() == 5_000_003, || format!("{} bytes", a.payload().len()))?;
    ensure(byte_size(FlyteFormat::FLYTE40, 1_000_000) == Some(5_000_003), || "byte_size".into())?;
    let wide = PackedArray::new(FlyteFormat::F64, 1_000_000).map_err(|e| e.to_string())?;
    let (num, den) = (a.data().len(), wide.data().len());
    ensure(num * 8 == den * 5, || format!("ratio {num}/{den}"))?;
    Ok(format!("5,000,003 bytes; payload ratio {num}/{den} = {}", num as f64 / den as f64))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn speedup<T: Native>(fmt: FlyteFormat) -> Result<(f64, f64, f64), String> {
    const N: usize = 1 << 20;
    const REPS: usize = 10;
    let mut r = rng(7);
    let values: Vec<T> = (0..N).map(|_| T::from_f64(r.gen::<f64>() * 2.0 - 1.0)).collect();
    let original = PackedArray::from_values(fmt, &values, TZ).map_err(|e| e.to_string())?;
    let codec = Codec::new(fmt, 16).map_err(|e| e.to_string())?;
    let alpha = T::from_f64(-1.0);

    let time = |f: &mut dyn FnMut(&mut PackedArray)| -> f64 {
        let mut a = original.clone();
        f(&mut a); // warm-up
        let mut samples = Vec::with_capacity(REPS);
        for _ in 0..REPS {
            let mut a = original.clone();
            let t = Instant::now();
            f(&mut a);
            samples.push(t.elapsed().as_secs_f64());
            std::hint::black_box(&a);
        }
        median(samples)
    };
    let vector = time(&mut |a| kernels::scale(&codec, alpha, a, TZ).unwrap());
    let scalar = time(&mut |a| {
        for i in 0..a.len() {
            let v: T = a.get_value(i).unwrap();
            a.set_value(i, alpha * v, TZ).unwrap();
        }
    });
    // Both paths must agree before the timing means anything.
    let mut x = original.clone();
    let mut y = original.clone();
    kernels::scale(&codec, alpha, &mut x, TZ).unwrap();
    for i in 0..y.len() {
        let v: T = y.get_value(i).unwrap();
        y.set_value(i, alpha * v, TZ).unwrap();
    }
    ensure(x == y, || format!("{fmt}: vector and scalar results differ"))?;
    Ok((scalar / vector, vector, scalar))
}

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for fmt in [FlyteFormat::FLYTE24, FlyteFormat::FLYTE40] {
        let (ratio, v, s) =
            if fmt.parent_bits() == 32 { speedup::<f32>(fmt)? } else { speedup::<f64>(fmt)? };
        ok &= ratio >= 4.0;
        parts.push(format!("{fmt} {ratio:.2}x ({:.2} vs {:.2} ns/elem)", v * 1e9 / (1 << 20) as f64, s * 1e9 / (1 << 20) as f64));
    }
    let line = parts.join(", ");
    if ok {
        Ok(line)
    } else {
        Err(format!("speedup below 4x: {line}"))
    }
}

fn criterion_8() -> Outcome {
    let fmt = FlyteFormat::FLYTE16;
    let ones = PackedArray::from_values(fmt, &[1.0f32; 300], TZ).map_err(|e| e.to_string())?;
    let codec = Codec::new(fmt, 16).map_err(|e| e.to_string())?;
    let each: f32 = kernels::reduce_sum(&codec, &ones, StorePolicy::RoundEachStore, TZ).map_err(|e| e.to_string())?;
    let wide: f32 = kernels::reduce_sum(&codec, &ones, StorePolicy::AccumulateWide, TZ).map_err(|e| e.to_string())?;
    ensure(each == 256.0 && wide == 300.0, || format!("RoundEachStore {each}, AccumulateWide {wide}"))?;
    Ok(format!("RoundEachStore {each}, AccumulateWide {wide}"))
}

fn bits<T: Native>(v: &[T]) -> Vec<u64> {
    v.iter().map(|x| x.to_raw()).collect()
}

fn kernel_case<T: Native>(fmt: FlyteFormat, r: &mut impl Rng) -> Result<usize, String> {
    let codec = Codec::new(fmt, 16).map_err(|e| e.to_string())?;
    let e = |e: Error| e.to_string();
    let mut runs = 0;
    for (m, k, n) in [(1, 1, 1), (5, 3, 4), (16, 16, 16), (33, 17, 29), (64, 64, 64)] {
        let gen = |r: &mut _, len| -> Vec<T> { (0..len).map(|_| T::from_f64(Rng::gen::<f64>(r) * 2.0 - 1.0)).collect() };
        let a = PackedMatrix::from_values(fmt, m, k, &gen(r, m * k), TZ).map_err(e)?;
        let b = PackedMatrix::from_values(fmt, k, n, &gen(r, k * n), TZ).map_err(e)?;
        let x = PackedArray::from_values(fmt, &gen(r, k), TZ).map_err(e)?;
        for mode in RoundingMode::ALL {
            let mut c = [PackedMatrix::new(fmt, m, n).map_err(e)?, PackedMatrix::new(fmt, m, n).map_err(e)?];
            let mut y = [PackedArray::new(fmt, m).map_err(e)?, PackedArray::new(fmt, m).map_err(e)?];
            for u in 0..2 {
                kernels::gemm::<T, _>(&codec, &a, &b, &mut c[u], mode, u + 1).map_err(e)?;
                kernels::gemv::<T, _>(&codec, &a, &x, &mut y[u], mode, u + 1).map_err(e)?;
            }
            ensure(c[0] == c[1], || format!("{fmt} gemm {m}x{k}x{n} {mode}: unroll differs"))?;
            ensure(y[0] == y[1], || format!("{fmt} gemv {m}x{k} {mode}: unroll differs"))?;
            if fmt.is_native() {
                let (av, bv, xv) = (
                    a.data().to_values::<T>().map_err(e)?,
                    b.data().to_values::<T>().map_err(e)?,
                    x.to_values::<T>().map_err(e)?,
                );
                let mut c_ref = vec![T::zero(); m * n];
                reference::gemm(&av, &bv, &mut c_ref, m, k, n);
                let mut y_ref = vec![T::zero(); m];
                reference::gemv(&av, &xv, &mut y_ref);
                ensure(bits(&c[0].data().to_values::<T>().map_err(e)?) == bits(&c_ref), || format!("{fmt} gemm vs reference"))?;
                ensure(bits(&y[0].to_values::<T>().map_err(e)?) == bits(&y_ref), || format!("{fmt} gemv vs reference"))?;
                let mut s = x.clone();
                kernels::scale(&codec, T::from_f64(0.5), &mut s, mode).map_err(e)?;
                let mut s_ref = xv.clone();
                reference::scale(T::from_f64(0.5), &mut s_ref);
                ensure(bits(&s.to_values::<T>().map_err(e)?) == bits(&s_ref), || format!("{fmt} scale vs reference"))?;
                let d: T = kernels::dot(&codec, &x, &x, StorePolicy::AccumulateWide, mode).map_err(e)?;
                ensure(d.to_raw() == reference::dot(&xv, &xv).to_raw(), || format!("{fmt} dot vs reference"))?;
            }
            runs += 1;
        }
    }
    // Identity and small integers must come out exact in every format.
    let n = 24;
    let ident: Vec<T> = (0..n * n).map(|i| T::from_f64(if i / n == i % n { 1.0 } else { 0.0 })).collect();
    let ints: Vec<T> = (0..n * n).map(|i| T::from_f64(((i * 7) % 11) as f64 - 5.0)).collect();
    let id = PackedMatrix::from_values(fmt, n, n, &ident, TZ).map_err(e)?;
    let b = PackedMatrix::from_values(fmt, n, n, &ints, TZ).map_err(e)?;
    for u in [1, 2] {
        let mut c = PackedMatrix::new(fmt, n, n).map_err(e)?;
        kernels::gemm::<T, _>(&codec, &id, &b, &mut c, NE, u).map_err(e)?;
        ensure(c == b, || format!("{fmt} identity gemm"))?;
        let col = PackedArray::from_values(fmt, &ints[..n], TZ).map_err(e)?;
        let mut y = PackedArray::new(fmt, n).map_err(e)?;
        kernels::gemv::<T, _>(&codec, &id, &col, &mut y, NE, u).map_err(e)?;
        ensure(y == col, || format!("{fmt} identity gemv"))?;
        let mut c = PackedMatrix::new(fmt, n, n).map_err(e)?;
        kernels::gemm::<T, _>(&codec, &b, &b, &mut c, NE, u).map_err(e)?;
        for i in 0..n {
            for j in 0..n {
                let want: f64 = (0..n).map(|p| ints[i * n + p].to_f64() * ints[p * n + j].to_f64()).sum();
                let got = c.get_value::<T>(i, j).map_err(e)?.to_f64();
                ensure(got == want, || format!("{fmt} integer gemm ({i},{j}): {got} vs {want}"))?;
            }
        }
    }
    Ok(runs)
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let mut runs = 0;
    for fmt in FORMATS {
        runs += if fmt.parent_bits() == 32 { kernel_case::<f32>(fmt, &mut r)? } else { kernel_case::<f64>(fmt, &mut r)? };
    }
    Ok(format!("{runs} gemm/gemv configurations plus identity and integer cases"))
}

fn criterion_10() -> Outcome {
    let mut r = rng(10);
    for fmt in FORMATS {
        for len in [0, 1, 17, 1000] {
            let mut a = PackedArray::new(fmt, len).unwrap();
            for i in 0..len {
                a.set(i, special_heavy_pattern(&mut r, fmt), NE).unwrap();
            }
            let mut file = Vec::new();
            a.save(&mut file).map_err(|e| e.to_string())?;
            let back = PackedArray::load_from(&file[..]).map_err(|e| e.to_string())?;
            ensure(back.payload() == a.payload() && back.format() == fmt && back.len() == len, || format!("{fmt} len {len}"))?;
        }
    }
    let mut good = Vec::new();
    PackedArray::new(FlyteFormat::FLYTE24, 4).unwrap().save(&mut good).unwrap();
    let mut magic = good.clone();
    magic[0] = b'X';
    let mut version = good.clone();
    version[4] = 2;
    let mut id = good.clone();
    id[5] = 99;
    let short = &good[..good.len() - 1];
    let results = [
        matches!(PackedArray::load_from(&magic[..]), Err(Error::BadMagic(_))),
        matches!(PackedArray::load_from(&version[..]), Err(Error::UnsupportedVersion(2))),
        matches!(PackedArray::load_from(&id[..]), Err(Error::UnknownFormatId(99))),
        matches!(PackedArray::load_from(short), Err(Error::Truncated { expected: 12, actual: 11 })),
        matches!(PackedArray::load_from(&good[..7]), Err(Error::Truncated { .. })),
    ];
    ensure(results.iter().all(|&ok| ok), || format!("malformed header errors: {results:?}"))?;
    Ok("round trip for all formats; bad magic, version, format id and truncation rejected distinctly".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("exhaustive round trip", criterion_1),
        ("truncation bit identity", criterion_2),
        ("rounding oracle", criterion_3),
        ("special-value matrix", criterion_4),
        ("SIMD/scalar equivalence", criterion_5),
        ("footprint", criterion_6),
        ("performance", criterion_7),
        ("accumulator policy", criterion_8),
        ("kernel correctness", criterion_9),
        ("persistence", criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let t = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(run)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into())),
        };
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2} {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n:>2} {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
