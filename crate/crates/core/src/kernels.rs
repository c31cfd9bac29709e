//! BLAS-style kernels over packed flyte operands.
//!
//! Elements are widened to the parent type, computed on, and narrowed back
//! when stored. Accumulators follow a [`StorePolicy`]; `gemv` and `gemm`
//! always accumulate wide. All sums run strictly left to right.
//!
//! Kernels are generic over [`ElementAccess`]: a [`Codec`] moves whole
//! vector groups, [`ScalarAccess`] converts one element at a time through
//! [`PackedArray::get`]/[`PackedArray::set`]. Both give bit-identical
//! results.

use crate::convert::{narrow, widen, RoundingMode};
use crate::formats::FlyteFormat;
use crate::native::{check_parent, Native};
use crate::packed::PackedArray;
use crate::simd::{Codec, MAX_VECTOR_BYTES};
use crate::{Error, Result};

/// When an accumulator is narrowed to the storage format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StorePolicy {
    /// Narrow after every update, as strict storage-type semantics require.
    RoundEachStore,
    /// Keep the accumulator in the parent type and narrow once at the end.
    AccumulateWide,
}

/// Row-major matrix backed by a [`PackedArray`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedMatrix {
    rows: usize,
    cols: usize,
    data: PackedArray,
}

impl PackedMatrix {
    pub fn new(fmt: FlyteFormat, rows: usize, cols: usize) -> Result<Self> {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::ShapeMismatch(format!("{rows}x{cols} overflows")))?;
        Ok(PackedMatrix { rows, cols, data: PackedArray::new(fmt, len)? })
    }

    pub fn from_values<T: Native>(
        fmt: FlyteFormat,
        rows: usize,
        cols: usize,
        values: &[T],
        mode: RoundingMode,
    ) -> Result<Self> {
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(PackedMatrix { rows, cols, data: PackedArray::from_values(fmt, values, mode)? })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn format(&self) -> FlyteFormat {
        self.data.format()
    }

    pub fn data(&self) -> &PackedArray {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut PackedArray {
        &mut self.data
    }

    pub fn get_value<T: Native>(&self, row: usize, col: usize) -> Result<T> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::IndexOutOfBounds { index: row * self.cols + col, len: self.data.len() });
        }
        self.data.get_value(row * self.cols + col)
    }
}

/// How kernels read and write runs of elements.
pub trait ElementAccess {
    fn format(&self) -> FlyteFormat;

    /// Elements `read` returns when `remaining` are left in the run.
    fn chunk_len(&self, remaining: usize) -> usize;

    /// Widens up to one chunk of elements from `[start, end)` into `buf`
    /// (which holds at least [`MAX_VECTOR_BYTES`] values) and returns how many.
    fn read<T: Native>(&self, array: &PackedArray, start: usize, end: usize, buf: &mut [T]) -> usize;

    /// Narrows `values` into the elements starting at `start`. `values` must
    /// be a chunk previously returned by `read` for the same position.
    fn write<T: Native>(&self, array: &mut PackedArray, start: usize, values: &[T], mode: RoundingMode);
}

/// Chunks span as many whole groups as fit in [`MAX_VECTOR_BYTES`] lanes;
/// only a final partial group goes element by element.
impl ElementAccess for Codec {
    fn format(&self) -> FlyteFormat {
        Codec::format(self)
    }

    #[inline(always)]
    fn chunk_len(&self, remaining: usize) -> usize {
        let group = self.group_len();
        if remaining >= group {
            (remaining / group * group).min(MAX_VECTOR_BYTES / group * group)
        } else {
            remaining
        }
    }

    #[inline]
    fn read<T: Native>(&self, array: &PackedArray, start: usize, end: usize, buf: &mut [T]) -> usize {
        let group = self.group_len();
        let n = self.chunk_len(end - start);
        if n >= group {
            let width = array.format().bytes();
            let bytes = &array.data()[start * width..(start + n) * width];
            for (src, lanes) in bytes.chunks_exact(group * width).zip(buf[..n].chunks_exact_mut(group)) {
                self.unpack_group_unchecked(src, lanes);
            }
        } else {
            for (k, v) in buf[..n].iter_mut().enumerate() {
                *v = T::from_raw(array.load(start + k));
            }
        }
        n
    }

    #[inline]
    fn write<T: Native>(&self, array: &mut PackedArray, start: usize, values: &[T], mode: RoundingMode) {
        let fmt = array.format();
        let group = self.group_len();
        if values.len() >= group && values.len().is_multiple_of(group) {
            let width = fmt.bytes();
            let bytes = &mut array.data_mut()[start * width..(start + values.len()) * width];
            for (lanes, dst) in values.chunks_exact(group).zip(bytes.chunks_exact_mut(group * width)) {
                self.pack_group_unchecked(lanes, mode, dst);
            }
        } else {
            for (k, v) in values.iter().enumerate() {
                array.store(start + k, narrow(v.to_raw(), fmt, mode));
            }
        }
    }
}

/// One element at a time through the checked scalar accessors.
#[derive(Clone, Copy, Debug)]
pub struct ScalarAccess(pub FlyteFormat);

const SCALAR_CHUNK: usize = 16;

impl ElementAccess for ScalarAccess {
    fn format(&self) -> FlyteFormat {
        self.0
    }

    fn chunk_len(&self, remaining: usize) -> usize {
        remaining.min(SCALAR_CHUNK)
    }

    fn read<T: Native>(&self, array: &PackedArray, start: usize, end: usize, buf: &mut [T]) -> usize {
        let n = self.chunk_len(end - start);
        for (k, v) in buf[..n].iter_mut().enumerate() {
            *v = array.get_value(start + k).expect("index checked by kernel");
        }
        n
    }

    fn write<T: Native>(&self, array: &mut PackedArray, start: usize, values: &[T], mode: RoundingMode) {
        for (k, &v) in values.iter().enumerate() {
            array.set_value(start + k, v, mode).expect("index checked by kernel");
        }
    }
}

fn check_operand<T: Native, A: ElementAccess>(access: &A, array: &PackedArray) -> Result<()> {
    check_parent::<T>(array.format())?;
    if access.format() != array.format() {
        return Err(Error::FormatMismatch { expected: access.format(), actual: array.format() });
    }
    Ok(())
}

fn check_lengths(a: &PackedArray, b: &PackedArray) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(())
}

/// `value` rounded to the storage format and widened back.
#[inline(always)]
pub fn round_to<T: Native>(value: T, fmt: FlyteFormat, mode: RoundingMode) -> T {
    T::from_raw(widen(narrow(value.to_raw(), fmt, mode), fmt))
}

struct Accumulator<T> {
    value: T,
    fmt: FlyteFormat,
    policy: StorePolicy,
    mode: RoundingMode,
}

impl<T: Native> Accumulator<T> {
    fn new(fmt: FlyteFormat, policy: StorePolicy, mode: RoundingMode) -> Self {
        Accumulator { value: T::zero(), fmt, policy, mode }
    }

    #[inline(always)]
    fn add(&mut self, term: T) {
        self.value = self.value + term;
        if self.policy == StorePolicy::RoundEachStore {
            self.value = round_to(self.value, self.fmt, self.mode);
        }
    }

    fn finish(self) -> T {
        round_to(self.value, self.fmt, self.mode)
    }
}

/// `x <- alpha * x`, one group at a time.
pub fn scale<T: Native, A: ElementAccess>(access: &A, alpha: T, x: &mut PackedArray, mode: RoundingMode) -> Result<()> {
    check_operand::<T, A>(access, x)?;
    let mut buf = [T::zero(); MAX_VECTOR_BYTES];
    let mut i = 0;
    while i < x.len() {
        let n = access.read(x, i, x.len(), &mut buf);
        for v in &mut buf[..n] {
            *v = alpha * *v;
        }
        access.write(x, i, &buf[..n], mode);
        i += n;
    }
    Ok(())
}

/// `y <- alpha * x + y`.
pub fn axpy<T: Native, A: ElementAccess>(
    access: &A,
    alpha: T,
    x: &PackedArray,
    y: &mut PackedArray,
    mode: RoundingMode,
) -> Result<()> {
    check_operand::<T, A>(access, x)?;
    check_operand::<T, A>(access, y)?;
    check_lengths(x, y)?;
    let mut xs = [T::zero(); MAX_VECTOR_BYTES];
    let mut ys = [T::zero(); MAX_VECTOR_BYTES];
    let mut i = 0;
    while i < x.len() {
        let n = access.read(x, i, x.len(), &mut xs);
        access.read(y, i, y.len(), &mut ys);
        for (yv, &xv) in ys[..n].iter_mut().zip(&xs[..n]) {
            *yv = alpha * xv + *yv;
        }
        access.write(y, i, &ys[..n], mode);
        i += n;
    }
    Ok(())
}

pub fn dot<T: Native, A: ElementAccess>(
    access: &A,
    x: &PackedArray,
    y: &PackedArray,
    policy: StorePolicy,
    mode: RoundingMode,
) -> Result<T> {
    check_operand::<T, A>(access, x)?;
    check_operand::<T, A>(access, y)?;
    check_lengths(x, y)?;
    let mut acc = Accumulator::new(x.format(), policy, mode);
    let mut xs = [T::zero(); MAX_VECTOR_BYTES];
    let mut ys = [T::zero(); MAX_VECTOR_BYTES];
    let mut i = 0;
    while i < x.len() {
        let n = access.read(x, i, x.len(), &mut xs);
        access.read(y, i, y.len(), &mut ys);
        for (&a, &b) in xs[..n].iter().zip(&ys[..n]) {
            acc.add(a * b);
        }
        i += n;
    }
    Ok(acc.finish())
}

/// Euclidean norm: squares summed per `policy`, one square root, one final
/// narrowing.
pub fn magnitude<T: Native, A: ElementAccess>(
    access: &A,
    x: &PackedArray,
    policy: StorePolicy,
    mode: RoundingMode,
) -> Result<T> {
    check_operand::<T, A>(access, x)?;
    let mut acc = Accumulator::new(x.format(), policy, mode);
    let mut xs = [T::zero(); MAX_VECTOR_BYTES];
    let mut i = 0;
    while i < x.len() {
        let n = access.read(x, i, x.len(), &mut xs);
        for &v in &xs[..n] {
            acc.add(v * v);
        }
        i += n;
    }
    Ok(round_to(acc.value.sqrt(), x.format(), mode))
}

pub fn reduce_sum<T: Native, A: ElementAccess>(
    access: &A,
    x: &PackedArray,
    policy: StorePolicy,
    mode: RoundingMode,
) -> Result<T> {
    check_operand::<T, A>(access, x)?;
    let mut acc = Accumulator::new(x.format(), policy, mode);
    let mut xs = [T::zero(); MAX_VECTOR_BYTES];
    let mut i = 0;
    while i < x.len() {
        let n = access.read(x, i, x.len(), &mut xs);
        for &v in &xs[..n] {
            acc.add(v);
        }
        i += n;
    }
    Ok(acc.finish())
}

fn check_unroll(unroll: usize) -> Result<()> {
    match unroll {
        1 | 2 => Ok(()),
        other => Err(Error::ShapeMismatch(format!("unroll must be 1 or 2, got {other}"))),
    }
}

/// Visits the elements `[start, end)` chunk by chunk, two chunks per
/// iteration when `unroll == 2`. The visiting order is the same either way.
#[inline(always)]
fn for_each_chunk<T: Native, A: ElementAccess>(
    access: &A,
    array: &PackedArray,
    start: usize,
    end: usize,
    unroll: usize,
    mut f: impl FnMut(usize, &[T]),
) {
    let mut first = [T::zero(); MAX_VECTOR_BYTES];
    let mut second = [T::zero(); MAX_VECTOR_BYTES];
    let mut i = start;
    if unroll == 2 {
        while i < end {
            let n1 = access.read(array, i, end, &mut first);
            if i + n1 >= end {
                f(i - start, &first[..n1]);
                i += n1;
                break;
            }
            let n2 = access.read(array, i + n1, end, &mut second);
            f(i - start, &first[..n1]);
            f(i + n1 - start, &second[..n2]);
            i += n1 + n2;
        }
    }
    while i < end {
        let n = access.read(array, i, end, &mut first);
        f(i - start, &first[..n]);
        i += n;
    }
}

/// `y <- A x`. Each row is a wide dot product stored once with `mode`.
pub fn gemv<T: Native, A: ElementAccess>(
    access: &A,
    a: &PackedMatrix,
    x: &PackedArray,
    y: &mut PackedArray,
    mode: RoundingMode,
    unroll: usize,
) -> Result<()> {
    check_unroll(unroll)?;
    check_operand::<T, A>(access, a.data())?;
    check_operand::<T, A>(access, x)?;
    check_operand::<T, A>(access, y)?;
    if x.len() != a.cols || y.len() != a.rows {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} matrix with x of {} and y of {}",
            a.rows,
            a.cols,
            x.len(),
            y.len()
        )));
    }
    let xs: Vec<T> = read_all(access, x);
    let fmt = a.format();
    let mut row_sums = [T::zero(); MAX_VECTOR_BYTES];
    let mut r = 0;
    while r < a.rows {
        // Results are written back a chunk at a time so y goes through the
        // same group path as every other operand.
        let chunk = access.chunk_len(a.rows - r);
        for (k, out) in row_sums[..chunk].iter_mut().enumerate() {
            let row = r + k;
            let mut acc = Accumulator::new(fmt, StorePolicy::AccumulateWide, mode);
            for_each_chunk(access, a.data(), row * a.cols, (row + 1) * a.cols, unroll, |offset, vals: &[T]| {
                for (&av, &xv) in vals.iter().zip(&xs[offset..]) {
                    acc.add(av * xv);
                }
            });
            *out = acc.value;
        }
        access.write(y, r, &row_sums[..chunk], mode);
        r += chunk;
    }
    Ok(())
}

/// `C <- A B`, accumulating each output row wide and storing it once.
pub fn gemm<T: Native, A: ElementAccess>(
    access: &A,
    a: &PackedMatrix,
    b: &PackedMatrix,
    c: &mut PackedMatrix,
    mode: RoundingMode,
    unroll: usize,
) -> Result<()> {
    check_unroll(unroll)?;
    check_operand::<T, A>(access, a.data())?;
    check_operand::<T, A>(access, b.data())?;
    check_operand::<T, A>(access, c.data())?;
    if a.cols != b.rows || c.rows != a.rows || c.cols != b.cols {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} times {}x{} into {}x{}",
            a.rows, a.cols, b.rows, b.cols, c.rows, c.cols
        )));
    }
    let n = b.cols;
    let mut acc = vec![T::zero(); n];
    let mut a_row = vec![T::zero(); a.cols];
    for i in 0..a.rows {
        acc.fill(T::zero());
        for_each_chunk(access, a.data(), i * a.cols, (i + 1) * a.cols, 1, |offset, vals: &[T]| {
            a_row[offset..offset + vals.len()].copy_from_slice(vals);
        });
        for (p, &aip) in a_row.iter().enumerate() {
            for_each_chunk(access, b.data(), p * n, (p + 1) * n, unroll, |offset, vals: &[T]| {
                for (sum, &bv) in acc[offset..].iter_mut().zip(vals) {
                    *sum = *sum + aip * bv;
                }
            });
        }
        let mut j = 0;
        while j < n {
            let chunk = access.chunk_len(n - j);
            access.write(&mut c.data, i * n + j, &acc[j..j + chunk], mode);
            j += chunk;
        }
    }
    Ok(())
}

fn read_all<T: Native, A: ElementAccess>(access: &A, x: &PackedArray) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    let mut buf = [T::zero(); MAX_VECTOR_BYTES];
    let mut i = 0;
    while i < x.len() {
        let n = access.read(x, i, x.len(), &mut buf);
        out.extend_from_slice(&buf[..n]);
        i += n;
    }
    out
}

/// The same kernels on plain parent-type slices, in the same operation
/// order, with wide accumulators and no narrowing anywhere.
pub mod reference {
    use crate::native::Native;

    pub fn scale<T: Native>(alpha: T, x: &mut [T]) {
        for v in x {
            *v = alpha * *v;
        }
    }

    pub fn axpy<T: Native>(alpha: T, x: &[T], y: &mut [T]) {
        for (yv, &xv) in y.iter_mut().zip(x) {
            *yv = alpha * xv + *yv;
        }
    }

    pub fn dot<T: Native>(x: &[T], y: &[T]) -> T {
        x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn magnitude<T: Native>(x: &[T]) -> T {
        x.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn sum<T: Native>(x: &[T]) -> T {
        x.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// `a` is `rows x x.len()`, row-major.
    pub fn gemv<T: Native>(a: &[T], x: &[T], y: &mut [T]) {
        let cols = x.len();
        for (r, out) in y.iter_mut().enumerate() {
            *out = dot(&a[r * cols..(r + 1) * cols], x);
        }
    }

    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`, all row-major.
    pub fn gemm<T: Native>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let c_row = &mut c[i * n..(i + 1) * n];
            c_row.fill(T::zero());
            for p in 0..k {
                let aip = a[i * k + p];
                for (sum, &bv) in c_row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *sum = *sum + aip * bv;
                }
            }
        }
    }
}
