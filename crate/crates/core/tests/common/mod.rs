//! Brute-force oracles written directly from the defining formulas, sharing
//! no code with the kernels under test beyond the `Matrix` container.
#![allow(dead_code)]

use polysketch::sketch::SketchTree;
use polysketch::Matrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn pow(x: f64, p: u32) -> f64 {
    let mut y = 1.0;
    for _ in 0..p {
        y *= x;
    }
    y
}

pub fn matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for t in 0..a.cols() {
                s += a.get(i, t) * b.get(t, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

pub fn frob(m: &Matrix<f64>) -> f64 {
    m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(got: &Matrix<f64>, want: &Matrix<f64>) -> f64 {
    assert_eq!(got.shape(), want.shape());
    let diff: f64 = got.as_slice().iter().zip(want.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let base = frob(want);
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

/// `lt(A·Bᵀ)·C` by explicit loops over `j ≤ i`.
pub fn lt_multiply(a: &Matrix<f64>, b: &Matrix<f64>, c: &Matrix<f64>) -> Matrix<f64> {
    let n = a.rows();
    let mut out = Matrix::zeros(n, c.cols());
    for i in 0..n {
        for j in 0..=i {
            let w = dot(a.row(i), b.row(j));
            for t in 0..c.cols() {
                out.set(i, t, out.get(i, t) + w * c.get(j, t));
            }
        }
    }
    out
}

/// Σ_{j} w(i,j) v_j / (1 + Σ_j w(i,j)) over `j ≤ i` (causal) or all `j`.
pub fn weighted_attention(
    n: usize,
    v: &Matrix<f64>,
    causal: bool,
    mut w: impl FnMut(usize, usize) -> f64,
) -> Matrix<f64> {
    let mut out = Matrix::zeros(n, v.cols());
    for i in 0..n {
        let end = if causal { i + 1 } else { n };
        let mut mass = 0.0;
        let mut num = vec![0.0; v.cols()];
        for j in 0..end {
            let s = w(i, j);
            mass += s;
            for t in 0..v.cols() {
                num[t] += s * v.get(j, t);
            }
        }
        for t in 0..v.cols() {
            out.set(i, t, num[t] / (1.0 + mass.max(0.0)));
        }
    }
    out
}

pub fn poly_attention(q: &Matrix<f64>, k: &Matrix<f64>, v: &Matrix<f64>, p: u32, causal: bool) -> Matrix<f64> {
    weighted_attention(q.rows(), v, causal, |i, j| pow(dot(q.row(i), k.row(j)), p))
}

/// Softmax attention without the max shift.
pub fn softmax_attention(q: &Matrix<f64>, k: &Matrix<f64>, v: &Matrix<f64>, beta: f64) -> Matrix<f64> {
    let n = q.rows();
    let mut out = Matrix::zeros(n, v.cols());
    for i in 0..n {
        let e: Vec<f64> = (0..k.rows()).map(|j| (dot(q.row(i), k.row(j)) / beta).exp()).collect();
        let z: f64 = e.iter().sum();
        for t in 0..v.cols() {
            let s: f64 = (0..k.rows()).map(|j| e[j] * v.get(j, t)).sum();
            out.set(i, t, s / z);
        }
    }
    out
}

fn vec_times(x: &[f64], g: &Matrix<f64>) -> Vec<f64> {
    (0..g.cols()).map(|c| (0..g.rows()).map(|t| x[t] * g.get(t, c)).sum()).collect()
}

/// Algorithm 1's recursion for one vector, reading the tree's matrices by
/// heap index (children of node `i` are `2i` and `2i + 1`).
pub fn sketch_vector(tree: &SketchTree, x: &[f64]) -> Vec<f64> {
    fn go(tree: &SketchTree, node: usize, x: &[f64]) -> Vec<f64> {
        if node >= tree.degree_q() {
            return x.to_vec();
        }
        let n = &tree.nodes()[node - 1];
        assert_eq!(n.heap_index, node);
        let m1 = go(tree, 2 * node, x);
        let m2 = go(tree, 2 * node + 1, x);
        let y1 = vec_times(&m1, &n.g1);
        let y2 = vec_times(&m2, &n.g2);
        let s = (1.0 / tree.sketch_size() as f64).sqrt();
        y1.iter().zip(&y2).map(|(a, b)| s * a * b).collect()
    }
    go(tree, 1, x)
}

pub fn sketch_rows(tree: &SketchTree, a: &Matrix<f64>) -> Matrix<f64> {
    let rows: Vec<Vec<f64>> = a.row_iter().map(|r| sketch_vector(tree, r)).collect();
    if rows.is_empty() {
        return Matrix::zeros(0, tree.sketch_size());
    }
    Matrix::from_rows(&rows).unwrap()
}

/// `x ⊗ x` in the order `x₀x₀, x₀x₁, …`.
pub fn self_tensor(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * x.len());
    for a in x {
        for b in x {
            out.push(a * b);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
/// Causal sketched attention with `⟨l_i, r_j⟩²` weights, or exact
/// `⟨q_i, k_j⟩^p` weights inside a block when `local_exact`.
pub fn sketched_causal(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    v: &Matrix<f64>,
    l: &Matrix<f64>,
    r: &Matrix<f64>,
    p: u32,
    block: usize,
    local_exact: bool,
) -> Matrix<f64> {
    weighted_attention(q.rows(), v, true, |i, j| {
        if local_exact && i / block == j / block {
            pow(dot(q.row(i), k.row(j)), p)
        } else {
            pow(dot(l.row(i), r.row(j)), 2)
        }
    })
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    polysketch::rng::gaussian(rows, cols, seed)
}

pub fn unit_rows(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    polysketch::rng::unit_rows(rows, cols, seed)
}

/// Rows shifted to mean zero.
pub fn centered(m: &Matrix<f64>) -> Matrix<f64> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let mean = m.row(i).iter().sum::<f64>() / m.cols() as f64;
        for x in out.row_mut(i) {
            *x -= mean;
        }
    }
    out
}
