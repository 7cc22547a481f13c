//! Dense row-major matrices and the handful of kernels every other module
//! builds on.
//!
//! Storage precision is a type parameter (`f32` or `f64`). Every reduction
//! (dot products, norms, softmax sums) accumulates in `f64` regardless of the
//! storage type.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault;

/// Storage precision tag, also used as the dtype byte of the PSKM format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn dtype_byte(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::F64 => 1,
        }
    }

    pub fn from_dtype_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Precision::F32),
            1 => Some(Precision::F64),
            _ => None,
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::invalid(format!("unknown precision {other:?}"))),
        }
    }
}

/// Scalar storage type of a [`Matrix`].
pub trait Element: Copy + Default + PartialEq + PartialOrd + fmt::Debug + Send + Sync + 'static {
    const PRECISION: Precision;

    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
    fn is_finite(self) -> bool;
    /// Largest representable value strictly closer to zero than `self`.
    fn next_toward_zero(self) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f64 {
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn next_toward_zero(self) -> Self {
        if self > 0.0 {
            self.next_down()
        } else if self < 0.0 {
            self.next_up()
        } else {
            self
        }
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Element for f32 {
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn next_toward_zero(self) -> Self {
        if self > 0.0 {
            self.next_down()
        } else if self < 0.0 {
            self.next_up()
        } else {
            self
        }
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T: Element = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Element> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Matrix");
        s.field("rows", &self.rows).field("cols", &self.cols).field("precision", &T::PRECISION);
        if self.data.len() <= 64 {
            let rows: Vec<&[T]> = self.data.chunks(self.cols.max(1)).collect();
            s.field("data", &rows);
        }
        s.finish()
    }
}

impl<T: Element> Matrix<T> {
    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("Matrix::new", format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: idx / cols.max(1), col: idx % cols.max(1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::default(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![T::from_f64(value); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::from_f64(1.0);
        }
        m
    }

    /// Builds a matrix from `f64` row slices; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("row {i} has {} entries, expected {cols}", r.len()),
                ));
            }
            data.extend(r.iter().map(|&v| T::from_f64(v)));
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(T::from_f64(f(i, j)));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        // chunks(0) panics, and a 0-column matrix still has `rows` (empty) rows
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Rows `lo..hi` as a new matrix.
    pub fn row_block(&self, lo: usize, hi: usize) -> Self {
        assert!(lo <= hi && hi <= self.rows);
        Self { rows: hi - lo, cols: self.cols, data: self.data[lo * self.cols..hi * self.cols].to_vec() }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| T::from_f64(f(v.to_f64()))).collect() }
    }

    pub fn cast<U: Element>(&self) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect() }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.cast()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape("sub", other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| T::from_f64(a.to_f64() - b.to_f64())).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape("max_abs_diff", other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs()).fold(0.0, f64::max))
    }

    fn check_same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot<T: Element, U: Element>(a: &[T], b: &[U]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.to_f64() * y.to_f64()).sum()
}

/// Standard matrix product `A·B`, row-parallel.
pub fn matmul<T: Element>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::shape("matmul", format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols)));
    }
    let (n, m, k) = (a.rows, a.cols, b.cols);
    let mut out = vec![T::default(); n * k];
    if k == 0 {
        return Ok(Matrix::from_vec_unchecked(n, k, out));
    }
    let bf: Vec<f64> = b.data.iter().map(|v| v.to_f64()).collect();
    out.par_chunks_mut(k).enumerate().for_each(|(i, out_row)| {
        let mut acc = vec![0.0f64; k];
        let a_row = &a.data[i * m..(i + 1) * m];
        for (l, &av) in a_row.iter().enumerate() {
            let av = av.to_f64();
            if av == 0.0 {
                continue;
            }
            let b_row = &bf[l * k..(l + 1) * k];
            for (acc_j, &bv) in acc.iter_mut().zip(b_row) {
                *acc_j += av * bv;
            }
        }
        for (o, v) in out_row.iter_mut().zip(acc) {
            *o = T::from_f64(v);
        }
    });
    Ok(Matrix::from_vec_unchecked(n, k, out))
}

/// `A·Bᵀ` without materializing the transpose.
pub fn matmul_transpose_b<T: Element>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "matmul_transpose_b",
            format!("{}x{} times ({}x{})ᵀ", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let (n, k) = (a.rows, b.rows);
    let mut out = vec![T::default(); n * k];
    if k == 0 {
        return Ok(Matrix::from_vec_unchecked(n, k, out));
    }
    out.par_chunks_mut(k).enumerate().for_each(|(i, out_row)| {
        let a_row = a.row(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = T::from_f64(dot(a_row, b.row(j)));
        }
    });
    Ok(Matrix::from_vec_unchecked(n, k, out))
}

/// Entrywise product.
pub fn hadamard<T: Element>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.check_same_shape("hadamard", b)?;
    Ok(Matrix::from_vec_unchecked(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| T::from_f64(x.to_f64() * y.to_f64())).collect(),
    ))
}

/// Replaces every row `a` by `a ⊗ a` in lexicographic Kronecker order
/// `(a₁a₁, a₁a₂, …, a_m a_m)`.
pub fn row_self_tensor<T: Element>(a: &Matrix<T>) -> Matrix<T> {
    let m = a.cols;
    let mut data = Vec::with_capacity(a.rows * m * m);
    for row in a.row_iter() {
        for &x in row {
            let x = x.to_f64();
            data.extend(row.iter().map(|&y| T::from_f64(x * y.to_f64())));
        }
    }
    Matrix::from_vec_unchecked(a.rows, m * m, data)
}

/// `x^p` for even `p`, by binary exponentiation (repeated squaring for powers
/// of two).
#[inline]
pub(crate) fn even_pow(x: f64, p: u32) -> f64 {
    let mut base = x;
    let mut e = p;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        e >>= 1;
        if e > 0 {
            base *= base;
        }
    }
    acc
}

/// Raises every entry to the even power `p ≥ 2`.
pub fn entrywise_pow<T: Element>(m: &Matrix<T>, p: u32) -> Result<Matrix<T>> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::invalid(format!("entrywise_pow needs an even power >= 2, got {p}")));
    }
    Ok(m.map(|v| even_pow(v, p)))
}

/// Causal visibility of column `j` from row `i`: the diagonal is kept.
#[inline]
pub(crate) fn lt_keeps(i: usize, j: usize) -> bool {
    if fault::lt_strict() {
        j < i
    } else {
        j <= i
    }
}

/// Zeroes every entry above the diagonal.
pub fn lt_mask<T: Element>(m: &Matrix<T>) -> Result<Matrix<T>> {
    if m.rows != m.cols {
        return Err(Error::shape("lt_mask", format!("expected a square matrix, got {}x{}", m.rows, m.cols)));
    }
    let mut out = m.clone();
    for i in 0..m.rows {
        for j in 0..m.cols {
            if !lt_keeps(i, j) {
                out.data[i * m.cols + j] = T::default();
            }
        }
    }
    Ok(out)
}

pub fn frobenius_norm<T: Element>(m: &Matrix<T>) -> f64 {
    m.data
        .iter()
        .map(|&v| {
            let v = v.to_f64();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute difference when `b` is zero.
pub fn relative_frobenius_error<T: Element>(a: &Matrix<T>, b: &Matrix<T>) -> Result<f64> {
    a.check_same_shape("relative_frobenius_error", b)?;
    let diff: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt();
    let base = frobenius_norm(b);
    Ok(if base > 0.0 { diff / base } else { diff })
}

/// Divisor floor for the variance-normalized layer norm.
pub const LAYER_NORM_STD_FLOOR: f64 = 1e-6;

/// Row-wise layer normalization: center each row, optionally divide by its
/// population standard deviation (floored at [`LAYER_NORM_STD_FLOOR`]), then
/// apply `gain ∗ x + bias`.
pub fn layer_norm_rows<T: Element>(
    m: &Matrix<T>,
    gain: &[f64],
    bias: &[f64],
    normalize_variance: bool,
) -> Result<Matrix<T>> {
    let h = m.cols;
    if h == 0 {
        return Err(Error::invalid("layer_norm_rows needs at least one column"));
    }
    if gain.len() != h || bias.len() != h {
        return Err(Error::shape(
            "layer_norm_rows",
            format!("gain/bias lengths {}/{} for {h} columns", gain.len(), bias.len()),
        ));
    }
    let mut out = Vec::with_capacity(m.data.len());
    let mut centered = vec![0.0f64; h];
    for row in m.row_iter() {
        let mean = row.iter().map(|v| v.to_f64()).sum::<f64>() / h as f64;
        for (c, &v) in centered.iter_mut().zip(row) {
            *c = v.to_f64() - mean;
        }
        let scale = if normalize_variance {
            let var = centered.iter().map(|c| c * c).sum::<f64>() / h as f64;
            1.0 / var.sqrt().max(LAYER_NORM_STD_FLOOR)
        } else {
            1.0
        };
        for j in 0..h {
            out.push(T::from_f64(gain[j] * centered[j] * scale + bias[j]));
        }
    }
    Ok(Matrix::from_vec_unchecked(m.rows, h, out))
}

/// Row-wise softmax of `M / β`, stabilized by subtracting each row's maximum.
pub fn stable_softmax_rows<T: Element>(m: &Matrix<T>, beta: f64) -> Result<Matrix<T>> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("softmax needs beta > 0, got {beta}")));
    }
    let mut out = Vec::with_capacity(m.data.len());
    let mut buf = vec![0.0f64; m.cols];
    for row in m.row_iter() {
        let alpha = row.iter().map(|v| v.to_f64() / beta).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = (v.to_f64() / beta - alpha).exp();
            total += *b;
        }
        out.extend(buf.iter().map(|&e| T::from_f64(e / total)));
    }
    Ok(Matrix::from_vec_unchecked(m.rows, m.cols, out))
}
