//! Non-causal attention: the softmax reference, raw and normalized polynomial
//! attention, and the linearized sketched form.
//!
//! Polynomial attention expects `Q` and `K` to be layer-normalized already;
//! the functions here treat their inputs as the normalized `Q′`, `K′`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, even_pow, matmul, matmul_transpose_b, stable_softmax_rows, Element, Matrix, Precision};
use crate::sketch::{half_degree, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub degree: u32,
    pub beta: f64,
    /// Bias of the raw polynomial form only.
    pub alpha: f64,
    pub sketch_size: usize,
    pub precision: Precision,
}

impl AttentionConfig {
    /// Config with `β = √h`.
    pub fn new(degree: u32, h: usize, sketch_size: usize) -> Result<Self> {
        let cfg = Self { degree, beta: (h as f64).sqrt(), alpha: 0.0, sketch_size, precision: Precision::F64 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        half_degree(self.degree)?;
        if !(self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

fn check_qkv(op: &'static str, q: (usize, usize), k: (usize, usize), v: (usize, usize)) -> Result<()> {
    if q.1 != k.1 || k.0 != v.0 {
        return Err(Error::shape(op, format!("Q {q:?}, K {k:?}, V {v:?}")));
    }
    Ok(())
}

fn check_even(p: u32) -> Result<()> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::invalid(format!("degree must be even and >= 2, got {p}")));
    }
    Ok(())
}

/// `softmax(QKᵀ/β)·V`.
pub fn softmax_attention<T: Element>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>, beta: f64) -> Result<Matrix<T>> {
    check_qkv("softmax_attention", q.shape(), k.shape(), v.shape())?;
    let logits = matmul_transpose_b(&q.to_f64(), &k.to_f64())?;
    let w = stable_softmax_rows(&logits, beta)?;
    Ok(matmul(&w, &v.to_f64())?.cast())
}

/// Row-normalized `((⟨qᵢ,kⱼ⟩ + α)/β)ᵖ` weights.
#[derive(Debug, Clone)]
pub struct RawPolyWeights {
    pub weights: Matrix<f64>,
    /// Rows whose denominator was exactly zero; those rows are left at zero.
    pub zero_rows: Vec<usize>,
}

pub fn raw_polynomial_weights<T: Element>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    alpha: f64,
    beta: f64,
    p: u32,
) -> Result<RawPolyWeights> {
    check_even(p)?;
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be > 0, got {beta}")));
    }
    if q.cols() != k.cols() {
        return Err(Error::shape("raw_polynomial_weights", format!("{:?} vs {:?}", q.shape(), k.shape())));
    }
    let mut w = matmul_transpose_b(&q.to_f64(), &k.to_f64())?.map(|s| even_pow((s + alpha) / beta, p));
    let mut zero_rows = Vec::new();
    for i in 0..w.rows() {
        let row = w.row_mut(i);
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            zero_rows.push(i);
            continue;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    Ok(RawPolyWeights { weights: w, zero_rows })
}

/// `A⁽ᵖ⁾` with `A⁽ᵖ⁾ᵢⱼ = ⟨qᵢ,kⱼ⟩ᵖ / (1 + Σⱼ′ ⟨qᵢ,kⱼ′⟩ᵖ)`.
pub fn exact_poly_weights<T: Element>(q: &Matrix<T>, k: &Matrix<T>, p: u32) -> Result<Matrix<f64>> {
    check_even(p)?;
    if q.cols() != k.cols() {
        return Err(Error::shape("exact_poly_weights", format!("{:?} vs {:?}", q.shape(), k.shape())));
    }
    let mut w = matmul_transpose_b(&q.to_f64(), &k.to_f64())?.map(|s| even_pow(s, p));
    for i in 0..w.rows() {
        let row = w.row_mut(i);
        let denom = 1.0 + row.iter().sum::<f64>();
        row.iter_mut().for_each(|x| *x /= denom);
    }
    Ok(w)
}

/// Normalized degree-`p` polynomial attention `D⁻¹(QKᵀ)ᵖV` with
/// `D = diag(1 + (QKᵀ)ᵖ1)`.
pub fn exact_poly_attention<T: Element>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>, p: u32) -> Result<Matrix<T>> {
    check_qkv("exact_poly_attention", q.shape(), k.shape(), v.shape())?;
    let w = exact_poly_weights(q, k, p)?;
    Ok(matmul(&w, &v.to_f64())?.cast())
}

/// Sketched attention `D̃⁻¹φ′(Q)φ′(K)ᵀV` in linear time.
///
/// Builds `φ′(K)ᵀV` and `φ′(K)ᵀ1` once, then reads each output row off
/// `φ′(qᵢ)`. The key mass `⟨φ′(qᵢ), φ′(K)ᵀ1⟩` is clamped at zero before the
/// `+1`, so every denominator is at least 1.
pub fn polysketch_attention<T: Element, F: FeatureMap + ?Sized>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    fmap: &F,
) -> Result<Matrix<T>> {
    check_qkv("polysketch_attention", q.shape(), k.shape(), v.shape())?;
    let (q, k, v) = (q.to_f64(), k.to_f64(), v.to_f64());
    fmap.check_input("polysketch_attention", &q)?;
    let phi_q = fmap.non_negative(&q)?;
    let phi_k = fmap.non_negative(&k)?;
    let d = phi_k.cols();
    let h = v.cols();

    // kv[f] = Σⱼ φ′(kⱼ)_f · [vⱼ | 1]
    let width = h + 1;
    let mut kv = vec![0.0f64; d * width];
    for j in 0..k.rows() {
        let vj = v.row(j);
        for (f, &phi) in phi_k.row(j).iter().enumerate() {
            if phi == 0.0 {
                continue;
            }
            let slot = &mut kv[f * width..(f + 1) * width];
            for (s, &x) in slot.iter_mut().zip(vj) {
                *s += phi * x;
            }
            slot[h] += phi;
        }
    }

    let mut out = Matrix::<f64>::zeros(q.rows(), h);
    let mut acc = vec![0.0f64; width];
    for i in 0..q.rows() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (f, &phi) in phi_q.row(i).iter().enumerate() {
            if phi == 0.0 {
                continue;
            }
            for (a, &s) in acc.iter_mut().zip(&kv[f * width..(f + 1) * width]) {
                *a += phi * s;
            }
        }
        let denom = 1.0 + acc[h].max(0.0);
        for (o, &a) in out.row_mut(i).iter_mut().zip(&acc[..h]) {
            *o = a / denom;
        }
    }
    Ok(out.cast())
}

/// Reference for [`polysketch_attention`] that materializes the `n×n`
/// sketched weight matrix from explicit `φ′` dot products, clamping negative
/// dots to zero.
pub fn polysketch_attention_naive<F: FeatureMap + ?Sized>(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    v: &Matrix<f64>,
    fmap: &F,
) -> Result<Matrix<f64>> {
    check_qkv("polysketch_attention_naive", q.shape(), k.shape(), v.shape())?;
    let phi_q = fmap.non_negative(q)?;
    let phi_k = fmap.non_negative(k)?;
    let mut w = Matrix::<f64>::zeros(q.rows(), k.rows());
    for i in 0..q.rows() {
        let mut total = 0.0;
        for j in 0..k.rows() {
            let s = dot(phi_q.row(i), phi_k.row(j)).max(0.0);
            w.set(i, j, s);
            total += s;
        }
        w.row_mut(i).iter_mut().for_each(|x| *x /= 1.0 + total);
    }
    matmul(&w, v)
}

/// Tolerance on `|mean|` for the absorption precondition.
pub const MEAN_ZERO_TOL: f64 = 1e-9;

/// Maps mean-zero `Q`, `K` to `Q′ = Q/√β + √(α/(βh))·1`, `K′` likewise, so that
/// `(⟨qᵢ,kⱼ⟩ + α)/β = ⟨q′ᵢ,k′ⱼ⟩`.
pub fn absorption_transform<T: Element>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    alpha: f64,
    beta: f64,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be > 0, got {beta}")));
    }
    if q.cols() != k.cols() || q.cols() == 0 {
        return Err(Error::shape("absorption_transform", format!("{:?} vs {:?}", q.shape(), k.shape())));
    }
    let h = q.cols();
    for (name, m) in [("Q", q), ("K", k)] {
        for (i, row) in m.row_iter().enumerate() {
            let mean = row.iter().map(|v| v.to_f64()).sum::<f64>() / h as f64;
            if mean.abs() > MEAN_ZERO_TOL {
                return Err(Error::Precondition(format!("row {i} of {name} has mean {mean:e}, expected 0")));
            }
        }
    }
    let scale = 1.0 / beta.sqrt();
    let shift = (alpha / (beta * h as f64)).sqrt();
    let f = |x: f64| x * scale + shift;
    Ok((q.map(f), k.map(f)))
}
