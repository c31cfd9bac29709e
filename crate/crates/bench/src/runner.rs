use std::hint::black_box;
use std::time::Instant;

use flyte::kernels::{self, reference, ElementAccess, ScalarAccess};
use flyte::packed::byte_size;
use flyte::{Codec, Native, PackedArray, PackedMatrix, StorePolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{AccessPath, BenchConfig, Kernel};
use crate::report::BenchReport;
use crate::{BenchError, Result};

/// `alpha` for scale and axpy.
const ALPHA: f64 = 0.75;
const POLICY: StorePolicy = StorePolicy::AccumulateWide;

/// Platform counters (cycles, cache misses, ...) sampled around every timed
/// rep. Totals over all reps land in [`BenchReport::counters`].
pub trait CounterProvider {
    fn start(&mut self);
    fn stop(&mut self) -> Vec<(String, u64)>;
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    run_benchmark_with(cfg, None)
}

pub fn run_benchmark_with(cfg: &BenchConfig, counters: Option<&mut dyn CounterProvider>) -> Result<BenchReport> {
    cfg.validate()?;
    let parent_is_f32 = cfg.format.parent_bits() == 32;
    match (cfg.path, parent_is_f32) {
        (AccessPath::Simd, true) => run_typed::<f32, _>(cfg, &Codec::new(cfg.format, 16)?, counters),
        (AccessPath::Simd, false) => run_typed::<f64, _>(cfg, &Codec::new(cfg.format, 16)?, counters),
        (AccessPath::Scalar, true) => run_typed::<f32, _>(cfg, &ScalarAccess(cfg.format), counters),
        (AccessPath::Scalar, false) => run_typed::<f64, _>(cfg, &ScalarAccess(cfg.format), counters),
    }
}

/// `2u - 1` at parent precision, exact for either parent.
fn uniform<T: Native>(rng: &mut ChaCha8Rng) -> T {
    if T::PARENT_BITS == 32 {
        T::from_f64((rng.gen::<f32>() * 2.0 - 1.0) as f64)
    } else {
        T::from_f64(rng.gen::<f64>() * 2.0 - 1.0)
    }
}

#[derive(Clone)]
enum Operands {
    Vectors(Vec<PackedArray>),
    Matrices(Vec<PackedMatrix>, Vec<PackedArray>),
}

struct Setup {
    operands: Operands,
    elements: usize,
}

fn random_array<T: Native>(cfg: &BenchConfig, rng: &mut ChaCha8Rng, len: usize) -> Result<PackedArray> {
    let mut a = PackedArray::new(cfg.format, len)?;
    for i in 0..len {
        a.set_value(i, uniform::<T>(rng), cfg.mode)?;
    }
    Ok(a)
}

fn random_matrix<T: Native>(cfg: &BenchConfig, rng: &mut ChaCha8Rng, n: usize) -> Result<PackedMatrix> {
    let mut m = PackedMatrix::new(cfg.format, n, n)?;
    for i in 0..n * n {
        m.data_mut().set_value(i, uniform::<T>(rng), cfg.mode)?;
    }
    Ok(m)
}

fn setup<T: Native>(cfg: &BenchConfig) -> Result<Setup> {
    let size = cfg.size;
    let elements = cfg.kernel.elements(size).ok_or(BenchError::TooLarge(size))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let operands = match cfg.kernel {
        Kernel::Scale | Kernel::Magnitude | Kernel::ReduceSum => {
            Operands::Vectors(vec![random_array::<T>(cfg, &mut rng, size)?])
        }
        Kernel::Axpy | Kernel::Dot => Operands::Vectors(vec![
            random_array::<T>(cfg, &mut rng, size)?,
            random_array::<T>(cfg, &mut rng, size)?,
        ]),
        Kernel::Gemv => {
            let a = random_matrix::<T>(cfg, &mut rng, size)?;
            let x = random_array::<T>(cfg, &mut rng, size)?;
            Operands::Matrices(vec![a], vec![x, PackedArray::new(cfg.format, size)?])
        }
        Kernel::Gemm => {
            let a = random_matrix::<T>(cfg, &mut rng, size)?;
            let b = random_matrix::<T>(cfg, &mut rng, size)?;
            Operands::Matrices(vec![a, b, PackedMatrix::new(cfg.format, size, size)?], vec![])
        }
    };
    Ok(Setup { operands, elements })
}

fn footprint(cfg: &BenchConfig) -> Result<u64> {
    let size = cfg.size;
    let too_large = || BenchError::TooLarge(size);
    let vector = byte_size(cfg.format, size).ok_or_else(too_large)? as u64;
    let square = byte_size(cfg.format, cfg.kernel.elements(size).ok_or_else(too_large)?).ok_or_else(too_large)? as u64;
    Ok(match cfg.kernel {
        Kernel::Scale | Kernel::Magnitude | Kernel::ReduceSum => vector,
        Kernel::Axpy | Kernel::Dot => 2 * vector,
        Kernel::Gemv => square + 2 * vector,
        Kernel::Gemm => 3 * square,
    })
}

/// Runs the kernel in place; returns the scalar result of reductions.
fn execute<T: Native, A: ElementAccess>(cfg: &BenchConfig, access: &A, ops: &mut Operands) -> Result<Option<T>> {
    let alpha = T::from_f64(ALPHA);
    let mode = cfg.mode;
    Ok(match (cfg.kernel, ops) {
        (Kernel::Scale, Operands::Vectors(v)) => {
            kernels::scale(access, alpha, &mut v[0], mode)?;
            None
        }
        (Kernel::Axpy, Operands::Vectors(v)) => {
            let (x, y) = v.split_at_mut(1);
            kernels::axpy(access, alpha, &x[0], &mut y[0], mode)?;
            None
        }
        (Kernel::Dot, Operands::Vectors(v)) => Some(kernels::dot(access, &v[0], &v[1], POLICY, mode)?),
        (Kernel::Magnitude, Operands::Vectors(v)) => Some(kernels::magnitude(access, &v[0], POLICY, mode)?),
        (Kernel::ReduceSum, Operands::Vectors(v)) => Some(kernels::reduce_sum(access, &v[0], POLICY, mode)?),
        (Kernel::Gemv, Operands::Matrices(m, v)) => {
            let (x, y) = v.split_at_mut(1);
            kernels::gemv::<T, A>(access, &m[0], &x[0], &mut y[0], mode, cfg.unroll)?;
            None
        }
        (Kernel::Gemm, Operands::Matrices(m, _)) => {
            let (ab, c) = m.split_at_mut(2);
            kernels::gemm::<T, A>(access, &ab[0], &ab[1], &mut c[0], mode, cfg.unroll)?;
            None
        }
        _ => unreachable!("operands built for this kernel"),
    })
}

/// Kernel result after [`execute`], widened.
fn result_values<T: Native>(cfg: &BenchConfig, ops: &Operands, scalar: Option<T>) -> Result<Vec<T>> {
    if let Some(v) = scalar {
        return Ok(vec![v]);
    }
    Ok(match (cfg.kernel, ops) {
        (Kernel::Scale, Operands::Vectors(v)) => v[0].to_values()?,
        (Kernel::Axpy, Operands::Vectors(v)) => v[1].to_values()?,
        (Kernel::Gemv, Operands::Matrices(_, v)) => v[1].to_values()?,
        (Kernel::Gemm, Operands::Matrices(m, _)) => m[2].data().to_values()?,
        _ => unreachable!("reductions return a scalar"),
    })
}

/// Same computation on plain parent-precision vectors, no narrowing.
fn reference_output<T: Native>(cfg: &BenchConfig, ops: &Operands) -> Result<Vec<T>> {
    let alpha = T::from_f64(ALPHA);
    let n = cfg.size;
    Ok(match (cfg.kernel, ops) {
        (Kernel::Scale, Operands::Vectors(v)) => {
            let mut x = v[0].to_values::<T>()?;
            reference::scale(alpha, &mut x);
            x
        }
        (Kernel::Axpy, Operands::Vectors(v)) => {
            let mut y = v[1].to_values::<T>()?;
            reference::axpy(alpha, &v[0].to_values::<T>()?, &mut y);
            y
        }
        (Kernel::Dot, Operands::Vectors(v)) => vec![reference::dot(&v[0].to_values::<T>()?, &v[1].to_values::<T>()?)],
        (Kernel::Magnitude, Operands::Vectors(v)) => vec![reference::magnitude(&v[0].to_values::<T>()?)],
        (Kernel::ReduceSum, Operands::Vectors(v)) => vec![reference::sum(&v[0].to_values::<T>()?)],
        (Kernel::Gemv, Operands::Matrices(m, v)) => {
            let mut y = vec![T::zero(); n];
            reference::gemv(&m[0].data().to_values::<T>()?, &v[0].to_values::<T>()?, &mut y);
            y
        }
        (Kernel::Gemm, Operands::Matrices(m, _)) => {
            let mut c = vec![T::zero(); n * n];
            reference::gemm(&m[0].data().to_values::<T>()?, &m[1].data().to_values::<T>()?, &mut c, n, n, n);
            c
        }
        _ => unreachable!("operands built for this kernel"),
    })
}

fn relative_error(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else if want == 0.0 {
        f64::INFINITY
    } else {
        ((got - want) / want).abs()
    }
}

fn max_relative_error<T: Native>(got: &[T], expected: &[T]) -> Result<f64> {
    Ok(got.iter().zip(expected).map(|(g, w)| relative_error(Native::to_f64(*g), Native::to_f64(*w))).fold(0.0, f64::max))
}

fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

fn run_typed<T: Native, A: ElementAccess>(
    cfg: &BenchConfig,
    access: &A,
    mut counters: Option<&mut dyn CounterProvider>,
) -> Result<BenchReport> {
    let bytes = footprint(cfg)?;
    let Setup { operands, elements } = setup::<T>(cfg)?;

    // Warm-up, also the run that gets checked.
    let mut warm = operands.clone();
    let scalar = execute::<T, A>(cfg, access, &mut warm)?;
    let max_rel_err = if cfg.check {
        let got = result_values(cfg, &warm, scalar)?;
        Some(max_relative_error(&got, &reference_output::<T>(cfg, &operands)?)?)
    } else {
        None
    };
    drop(warm);

    let mut rep_ns = Vec::with_capacity(cfg.reps);
    let mut totals: Vec<(String, u64)> = Vec::new();
    for _ in 0..cfg.reps {
        let mut ops = operands.clone();
        if let Some(c) = counters.as_deref_mut() {
            c.start();
        }
        let t = Instant::now();
        let out = execute::<T, A>(cfg, access, &mut ops)?;
        let ns = t.elapsed().as_nanos() as u64;
        if let Some(c) = counters.as_deref_mut() {
            for (name, value) in c.stop() {
                match totals.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, total)) => *total += value,
                    None => totals.push((name, value)),
                }
            }
        }
        black_box((out, ops));
        rep_ns.push(ns);
    }

    let mut sorted = rep_ns.clone();
    sorted.sort_unstable();
    let per_elem = |ns: f64| if elements == 0 { 0.0 } else { ns / elements as f64 };
    Ok(BenchReport {
        config: cfg.clone(),
        elements,
        ns_per_elem_median: per_elem(median(&sorted)),
        ns_per_elem_min: per_elem(sorted[0] as f64),
        bytes,
        max_rel_err,
        rep_ns,
        counters: totals,
    })
}

