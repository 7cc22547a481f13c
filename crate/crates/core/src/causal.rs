//! Causal attention in time linear in the sequence length.
//!
//! `lt(A·Bᵀ)·C` is computed block by block. With rows split into blocks of
//! `b`, block `l` contributes
//!
//! ```text
//! Hₗ = Bₗᵀ Cₗ              (m×k)
//! Zₗ = Σ_{j<l} Hⱼ          sequential prefix sum
//! Pₗ = lt(Aₗ Bₗᵀ) Cₗ       direct, inside the block
//! outₗ = Pₗ + Aₗ Zₗ
//! ```
//!
//! so the `n×n` matrix is never formed. Diagonal entries (`j = i`) belong to
//! the diagonal block. The prefix state accumulates in `f64`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{dot, even_pow, lt_keeps, matmul_transpose_b, row_self_tensor, Element, Matrix};
use crate::sketch::FeatureMap;

/// Largest `n` accepted by routines that materialize an `n×n` matrix.
pub const NAIVE_CAP: usize = 2048;
/// Largest `n` accepted by [`causal_exact_poly_attention`] (quadratic time,
/// linear memory).
pub const EXACT_CAUSAL_CAP: usize = 16384;

/// Partition of `n` rows into `⌈n/b⌉` blocks; the last block may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockPlan {
    pub n: usize,
    pub block_size: usize,
    pub blocks: usize,
}

impl BlockPlan {
    pub fn new(n: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 || block_size > n.max(1) {
            return Err(Error::invalid(format!("block size must satisfy 1 <= b <= n, got b = {block_size}, n = {n}")));
        }
        Ok(Self { n, block_size, blocks: n.div_ceil(block_size) })
    }

    /// Half-open row ranges of the blocks, in order.
    pub fn ranges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.blocks).map(move |l| {
            let lo = l * self.block_size;
            (lo, (lo + self.block_size).min(self.n))
        })
    }
}

/// Multiply-add tally of a blocked run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FlopCount {
    /// Work inside diagonal blocks (weights and weighted sums).
    pub diagonal: u64,
    /// Work building `Hₗ` into the prefix state.
    pub prefix: u64,
    /// Work reading `Aₗ Zₗ` off the prefix state.
    pub cross: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.diagonal + self.prefix + self.cross
    }
}

/// Shared engine: `cross(lo, hi)` yields the block's query-side and key-side
/// features for the prefix path, `weight(i, j)` the diagonal-block weight of
/// pair `j ≤ i` and `weight_cost` its multiply-add cost.
fn blocked_engine(
    plan: &BlockPlan,
    c: &Matrix<f64>,
    mut cross: impl FnMut(usize, usize) -> Result<(Matrix<f64>, Matrix<f64>)>,
    weight: impl Fn(usize, usize) -> f64,
    weight_cost: u64,
    flops: &mut FlopCount,
) -> Result<Matrix<f64>> {
    let n = plan.n;
    let k = c.cols();
    let mut out = Matrix::<f64>::zeros(n, k);
    let mut state: Vec<f64> = Vec::new();
    let mut m = 0;
    for (lo, hi) in plan.ranges() {
        let (a_l, b_l) = cross(lo, hi)?;
        if state.is_empty() {
            m = a_l.cols();
            state = vec![0.0; m * k];
        }
        for i in lo..hi {
            let row = out.row_mut(i);
            // Aₗ Zₗ
            for (f, &av) in a_l.row(i - lo).iter().enumerate() {
                let z = &state[f * k..(f + 1) * k];
                for (o, &zv) in row.iter_mut().zip(z) {
                    *o += av * zv;
                }
            }
            // Pₗ
            for j in lo..=i {
                if !lt_keeps(i, j) {
                    continue;
                }
                let w = weight(i, j);
                for (o, &cv) in row.iter_mut().zip(c.row(j)) {
                    *o += w * cv;
                }
                flops.diagonal += weight_cost + k as u64;
            }
        }
        flops.cross += ((hi - lo) * m * k) as u64;
        // Zₗ₊₁ = Zₗ + Hₗ
        for j in lo..hi {
            let cj = c.row(j);
            for (f, &bv) in b_l.row(j - lo).iter().enumerate() {
                if bv == 0.0 {
                    continue;
                }
                for (s, &cv) in state[f * k..(f + 1) * k].iter_mut().zip(cj) {
                    *s += bv * cv;
                }
            }
        }
        flops.prefix += ((hi - lo) * m * k) as u64;
    }
    Ok(out)
}

fn check_lt_shapes(op: &'static str, a: (usize, usize), b: (usize, usize), c: (usize, usize)) -> Result<()> {
    if a != b || a.0 != c.0 {
        return Err(Error::shape(op, format!("A {a:?}, B {b:?}, C {c:?}")));
    }
    Ok(())
}

/// `lt(A·Bᵀ)·C` by explicit materialization of `A·Bᵀ`. Capped at
/// [`NAIVE_CAP`] rows.
pub fn lt_multiply_naive<T: Element>(a: &Matrix<T>, b: &Matrix<T>, c: &Matrix<T>) -> Result<Matrix<T>> {
    check_lt_shapes("lt_multiply_naive", a.shape(), b.shape(), c.shape())?;
    let n = a.rows();
    if n > NAIVE_CAP {
        return Err(Error::CapExceeded { what: "n", value: n, cap: NAIVE_CAP });
    }
    let c = c.to_f64();
    let s = matmul_transpose_b(&a.to_f64(), &b.to_f64())?;
    let k = c.cols();
    let mut out = Matrix::<f64>::zeros(n, k);
    for i in 0..n {
        let row = out.row_mut(i);
        for j in 0..n {
            if !lt_keeps(i, j) {
                continue;
            }
            let w = s.get(i, j);
            for (o, &cv) in row.iter_mut().zip(c.row(j)) {
                *o += w * cv;
            }
        }
    }
    Ok(out.cast())
}

/// `lt(A·Bᵀ)·C` in `O(n·b·(m + k))` time with block size `b`.
pub fn lt_multiply_blocked<T: Element>(a: &Matrix<T>, b: &Matrix<T>, c: &Matrix<T>, block: usize) -> Result<Matrix<T>> {
    Ok(lt_multiply_blocked_counted(a, b, c, block)?.0)
}

pub fn lt_multiply_blocked_counted<T: Element>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    c: &Matrix<T>,
    block: usize,
) -> Result<(Matrix<T>, FlopCount)> {
    check_lt_shapes("lt_multiply_blocked", a.shape(), b.shape(), c.shape())?;
    let mut flops = FlopCount::default();
    if a.rows() == 0 {
        return Ok((Matrix::zeros(0, c.cols()), flops));
    }
    let plan = BlockPlan::new(a.rows(), block)?;
    let (a, b, c) = (a.to_f64(), b.to_f64(), c.to_f64());
    let m = a.cols() as u64;
    let out = blocked_engine(
        &plan,
        &c,
        |lo, hi| Ok((a.row_block(lo, hi), b.row_block(lo, hi))),
        |i, j| dot(a.row(i), b.row(j)),
        m,
        &mut flops,
    )?;
    Ok((out.cast(), flops))
}

/// Prefix state `Σ_{j < end of block l} bⱼcⱼᵀ` after each block, as `m×k`
/// matrices.
pub fn prefix_states<T: Element>(b: &Matrix<T>, c: &Matrix<T>, block: usize) -> Result<Vec<Matrix<f64>>> {
    if b.rows() != c.rows() {
        return Err(Error::shape("prefix_states", format!("B {:?}, C {:?}", b.shape(), c.shape())));
    }
    let plan = BlockPlan::new(b.rows(), block)?;
    let (m, k) = (b.cols(), c.cols());
    let mut state = vec![0.0f64; m * k];
    let mut out = Vec::with_capacity(plan.blocks);
    for (lo, hi) in plan.ranges() {
        for j in lo..hi {
            for f in 0..m {
                let bv = b.get(j, f).to_f64();
                for e in 0..k {
                    state[f * k + e] += bv * c.get(j, e).to_f64();
                }
            }
        }
        out.push(Matrix::from_vec_unchecked(m, k, state.clone()));
    }
    Ok(out)
}

fn check_causal_qkv<T: Element>(op: &'static str, q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>) -> Result<()> {
    if q.shape() != k.shape() || q.rows() != v.rows() {
        return Err(Error::shape(op, format!("Q {:?}, K {:?}, V {:?}", q.shape(), k.shape(), v.shape())));
    }
    Ok(())
}

fn check_degree(p: u32) -> Result<()> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::invalid(format!("degree must be even and >= 2, got {p}")));
    }
    Ok(())
}

/// Exact causal polynomial attention, row `i` =
/// `Σ_{j≤i} ⟨qᵢ,kⱼ⟩ᵖ vⱼ / (1 + Σ_{j≤i} ⟨qᵢ,kⱼ⟩ᵖ)`. Quadratic time; capped at
/// [`EXACT_CAUSAL_CAP`] rows.
pub fn causal_exact_poly_attention<T: Element>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    p: u32,
) -> Result<Matrix<T>> {
    check_causal_qkv("causal_exact_poly_attention", q, k, v)?;
    check_degree(p)?;
    let n = q.rows();
    if n > EXACT_CAUSAL_CAP {
        return Err(Error::CapExceeded { what: "n", value: n, cap: EXACT_CAUSAL_CAP });
    }
    let (q, k, v) = (q.to_f64(), k.to_f64(), v.to_f64());
    let h = v.cols();
    let mut out = Matrix::<f64>::zeros(n, h);
    let mut num = vec![0.0f64; h];
    for i in 0..n {
        num.iter_mut().for_each(|x| *x = 0.0);
        let mut mass = 0.0;
        for j in 0..=i {
            if !lt_keeps(i, j) {
                continue;
            }
            let s = even_pow(dot(q.row(i), k.row(j)), p);
            mass += s;
            for (a, &x) in num.iter_mut().zip(v.row(j)) {
                *a += s * x;
            }
        }
        let denom = 1.0 + mass;
        for (o, &a) in out.row_mut(i).iter_mut().zip(&num) {
            *o = a / denom;
        }
    }
    Ok(out.cast())
}

fn with_ones_column(v: &Matrix<f64>) -> Matrix<f64> {
    let h = v.cols();
    Matrix::from_fn(v.rows(), h + 1, |i, j| if j < h { v.get(i, j) } else { 1.0 })
}

/// Splits `[numerator | mass]` rows into attention outputs, clamping the mass
/// at zero so every denominator is at least 1.
fn normalize(acc: &Matrix<f64>) -> Matrix<f64> {
    let h = acc.cols() - 1;
    let mut out = Matrix::<f64>::zeros(acc.rows(), h);
    for i in 0..acc.rows() {
        let row = acc.row(i);
        let denom = 1.0 + row[h].max(0.0);
        for (o, &a) in out.row_mut(i).iter_mut().zip(&row[..h]) {
            *o = a / denom;
        }
    }
    out
}

/// Denominators `1 + max(0, mass)` of a causal sketched run, for auditing.
pub fn causal_polysketch_denominators<F: FeatureMap + ?Sized>(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    fmap: &F,
    block: usize,
    local_exact: bool,
) -> Result<Vec<f64>> {
    let ones = Matrix::<f64>::zeros(q.rows(), 0);
    let acc = causal_polysketch_accumulate(q, k, &ones, fmap, block, local_exact)?;
    Ok(acc.row_iter().map(|r| 1.0 + r[0].max(0.0)).collect())
}

fn causal_polysketch_accumulate<F: FeatureMap + ?Sized>(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    v: &Matrix<f64>,
    fmap: &F,
    block: usize,
    local_exact: bool,
) -> Result<Matrix<f64>> {
    check_causal_qkv("causal_polysketch_attention", q, k, v)?;
    fmap.check_input("causal_polysketch_attention", q)?;
    let c = with_ones_column(v);
    if q.rows() == 0 {
        return Ok(Matrix::zeros(0, c.cols()));
    }
    let plan = BlockPlan::new(q.rows(), block)?;
    let p = fmap.degree();
    let l = fmap.with_negativity(q)?;
    let r = fmap.with_negativity(k)?;
    let mut flops = FlopCount::default();
    let cross =
        |lo: usize, hi: usize| Ok((row_self_tensor(&l.row_block(lo, hi)), row_self_tensor(&r.row_block(lo, hi))));
    if local_exact {
        blocked_engine(&plan, &c, cross, |i, j| even_pow(dot(q.row(i), k.row(j)), p), q.cols() as u64, &mut flops)
    } else {
        blocked_engine(
            &plan,
            &c,
            cross,
            |i, j| {
                let s = dot(l.row(i), r.row(j));
                s * s
            },
            l.cols() as u64,
            &mut flops,
        )
    }
}

/// Causal sketched attention `D̃⁻¹ lt(φ′(Q)φ′(K)ᵀ) V` in linear time.
///
/// Cross-block terms run through the prefix state of `φ′(K)ₗᵀ[Vₗ | 1]`
/// (size `r²×(h+1)`). Diagonal-block weights are `(L Rᵀ)²` from the signed
/// sketches, or with `local_exact` the exact `(Q Kᵀ)ᵖ`.
pub fn causal_polysketch_attention<T: Element, F: FeatureMap + ?Sized>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    fmap: &F,
    block: usize,
    local_exact: bool,
) -> Result<Matrix<T>> {
    let acc = causal_polysketch_accumulate(&q.to_f64(), &k.to_f64(), &v.to_f64(), fmap, block, local_exact)?;
    Ok(normalize(&acc).cast())
}

/// Reference for [`causal_polysketch_attention`]: materializes the
/// lower-triangular weight matrix. Weights are clamped `φ′` dot products, with
/// exact `⟨qᵢ,kⱼ⟩ᵖ` for same-block pairs when `local_exact` is set. Capped at
/// [`NAIVE_CAP`] rows.
pub fn causal_polysketch_attention_naive<F: FeatureMap + ?Sized>(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    v: &Matrix<f64>,
    fmap: &F,
    block: usize,
    local_exact: bool,
) -> Result<Matrix<f64>> {
    check_causal_qkv("causal_polysketch_attention_naive", q, k, v)?;
    let n = q.rows();
    if n > NAIVE_CAP {
        return Err(Error::CapExceeded { what: "n", value: n, cap: NAIVE_CAP });
    }
    BlockPlan::new(n, block)?;
    let p = fmap.degree();
    let phi_q = fmap.non_negative(q)?;
    let phi_k = fmap.non_negative(k)?;
    let h = v.cols();
    let mut out = Matrix::<f64>::zeros(n, h);
    for i in 0..n {
        let mut weights = vec![0.0f64; n];
        for (j, w) in weights.iter_mut().enumerate() {
            if !lt_keeps(i, j) {
                continue;
            }
            *w = if local_exact && i / block == j / block {
                even_pow(dot(q.row(i), k.row(j)), p)
            } else {
                dot(phi_q.row(i), phi_k.row(j)).max(0.0)
            };
        }
        let denom = 1.0 + weights.iter().sum::<f64>();
        for c in 0..h {
            let s: f64 = (0..n).map(|j| weights[j] * v.get(j, c)).sum();
            out.set(i, c, s / denom);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::relative_frobenius_error;
    use crate::rng;
    use crate::sketch::sample_sketch;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn plan_covers_rows() {
        let p = BlockPlan::new(130, 32).unwrap();
        assert_eq!(p.blocks, 5);
        assert_eq!(p.ranges().last(), Some((128, 130)));
        assert!(BlockPlan::new(4, 0).is_err());
        assert!(BlockPlan::new(4, 5).is_err());
    }

    #[test]
    fn naive_hand_values() {
        let i2 = Matrix::<f64>::identity(2);
        assert_eq!(lt_multiply_naive(&i2, &i2, &i2).unwrap(), i2);
        let ones = m(&[&[1.0], &[1.0]]);
        let c = m(&[&[1.0], &[2.0]]);
        assert_eq!(lt_multiply_naive(&ones, &ones, &c).unwrap(), m(&[&[1.0], &[3.0]]));
        assert_eq!(lt_multiply_naive(&ones, &ones, &Matrix::zeros(2, 3)).unwrap(), Matrix::zeros(2, 3));
        let big = Matrix::<f64>::zeros(NAIVE_CAP + 1, 1);
        assert!(matches!(lt_multiply_naive(&big, &big, &big), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn single_block_is_bitwise_naive() {
        let a: Matrix = rng::gaussian(9, 4, 1);
        let b: Matrix = rng::gaussian(9, 4, 2);
        let c: Matrix = rng::gaussian(9, 3, 3);
        assert_eq!(lt_multiply_blocked(&a, &b, &c, 9).unwrap(), lt_multiply_naive(&a, &b, &c).unwrap());
    }

    #[test]
    fn unit_blocks_follow_running_sum() {
        let a: Matrix = rng::gaussian(6, 3, 4);
        let b: Matrix = rng::gaussian(6, 3, 5);
        let c: Matrix = rng::gaussian(6, 2, 6);
        let out = lt_multiply_blocked(&a, &b, &c, 1).unwrap();
        let mut z = [[0.0f64; 2]; 3];
        for i in 0..6 {
            let d = dot(a.row(i), b.row(i));
            for e in 0..2 {
                let cross: f64 = (0..3).map(|f| a.get(i, f) * z[f][e]).sum();
                let expected = d * c.get(i, e) + cross;
                assert!((out.get(i, e) - expected).abs() < 1e-12);
            }
            for f in 0..3 {
                for e in 0..2 {
                    z[f][e] += b.get(i, f) * c.get(i, e);
                }
            }
        }
    }

    #[test]
    fn partial_last_block() {
        let a: Matrix = rng::gaussian(130, 5, 7);
        let b: Matrix = rng::gaussian(130, 5, 8);
        let c: Matrix = rng::gaussian(130, 3, 9);
        let fast = lt_multiply_blocked(&a, &b, &c, 32).unwrap();
        let slow = lt_multiply_naive(&a, &b, &c).unwrap();
        assert!(relative_frobenius_error(&fast, &slow).unwrap() < 1e-10);
    }

    #[test]
    fn exact_causal_small_cases() {
        let q = m(&[&[1.0, 1.0], &[0.5, 0.0]]);
        let k = m(&[&[1.0, 0.0], &[2.0, 1.0]]);
        let v = m(&[&[3.0], &[5.0]]);
        let out = causal_exact_poly_attention(&q, &k, &v, 2).unwrap();
        // s = <q1,k1>^2 = 1
        assert_eq!(out.get(0, 0), 3.0 * 1.0 / 2.0);
        // row 2: s1 = 0.25, s2 = 1
        let expected = (0.25 * 3.0 + 1.0 * 5.0) / (1.0 + 1.25);
        assert!((out.get(1, 0) - expected).abs() < 1e-15);
        assert!(causal_exact_poly_attention(&q, &k, &v, 3).is_err());
    }

    #[test]
    fn sketched_single_block_local_is_exact() {
        let q: Matrix = rng::unit_rows(24, 4, 1);
        let k: Matrix = rng::unit_rows(24, 4, 2);
        let v: Matrix = rng::gaussian(24, 3, 3);
        let t = sample_sketch(4, 5, 4, 0).unwrap();
        let a = causal_polysketch_attention(&q, &k, &v, &t, 24, true).unwrap();
        let b = causal_exact_poly_attention(&q, &k, &v, 4).unwrap();
        assert!(relative_frobenius_error(&a, &b).unwrap() < 1e-10);
    }

    #[test]
    fn sketched_matches_naive_both_flags() {
        let q: Matrix = rng::unit_rows(40, 4, 11);
        let k: Matrix = rng::unit_rows(40, 4, 12);
        let v: Matrix = rng::gaussian(40, 2, 13);
        let t = sample_sketch(4, 6, 4, 1).unwrap();
        for local in [false, true] {
            let fast = causal_polysketch_attention(&q, &k, &v, &t, 7, local).unwrap();
            let slow = causal_polysketch_attention_naive(&q, &k, &v, &t, 7, local).unwrap();
            assert!(relative_frobenius_error(&fast, &slow).unwrap() < 1e-9, "local = {local}");
        }
        let dens = causal_polysketch_denominators(&q, &k, &t, 7, false).unwrap();
        assert!(dens.iter().all(|&d| d >= 1.0));
    }

    #[test]
    fn prefix_states_match_naive_sum() {
        let b: Matrix = rng::gaussian(10, 3, 1);
        let c: Matrix = rng::gaussian(10, 2, 2);
        let states = prefix_states(&b, &c, 4).unwrap();
        assert_eq!(states.len(), 3);
        let last = &states[2];
        for f in 0..3 {
            for e in 0..2 {
                let s: f64 = (0..10).map(|j| b.get(j, f) * c.get(j, e)).sum();
                assert!((last.get(f, e) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flops_double_with_n() {
        let run = |n: usize| {
            let a = Matrix::<f64>::filled(n, 5, 1.0);
            let c = Matrix::<f64>::filled(n, 3, 1.0);
            lt_multiply_blocked_counted(&a, &a, &c, 16).unwrap().1.total()
        };
        assert_eq!(run(256), 2 * run(128));
    }
}
