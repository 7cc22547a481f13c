//! Recursive Gaussian polynomial sketches.
//!
//! A degree-`q` signed sketch (`q` a power of two) maps a row `a ∈ ℝʰ` to
//! `(a^{⊗q})ᵀS ∈ ℝʳ` without forming `a^{⊗q}`: the recursion sketches the input
//! twice at degree `q/2`, projects each copy with its own Gaussian matrix and
//! combines them as `√(1/r)·[(M₁G₁) ∗ (M₂G₂)]`. Self-tensoring the degree-`p/2`
//! output gives the non-negative degree-`p` feature map `φ′` with
//! `⟨φ′(q), φ′(k)⟩ ≈ ⟨q, k⟩ᵖ` and every such dot product a square.
//!
//! Recursion nodes are addressed by heap index: the root is 1 and node `i`
//! has children `2i` (the `M₁` branch) and `2i + 1` (the `M₂` branch). A tree
//! of degree `q` has combine nodes `1..q` and input leaves `q..2q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::matrix::{frobenius_norm, hadamard, matmul, matmul_transpose_b, row_self_tensor, Element, Matrix};
use crate::rng::{derive_seed, GaussianStream};

/// Degrees supported for the non-negative map.
pub const SUPPORTED_DEGREES: [u32; 4] = [2, 4, 8, 16];

/// Checks that `p` is one of [`SUPPORTED_DEGREES`] and returns `q = p/2`.
pub fn half_degree(p: u32) -> Result<usize> {
    if !SUPPORTED_DEGREES.contains(&p) {
        return Err(Error::invalid(format!("degree p must be one of {SUPPORTED_DEGREES:?}, got {p}")));
    }
    Ok((p / 2) as usize)
}

/// Degree of the sub-recursion rooted at heap index `node` in a tree of
/// degree `q`.
#[inline]
pub(crate) fn node_degree(q: usize, node: usize) -> usize {
    q >> node.ilog2()
}

/// Child path string of a heap index: `""` for the root, then one character
/// per level, `1` for the `M₁` branch and `2` for the `M₂` branch.
pub fn node_path(node: usize) -> String {
    let depth = node.ilog2();
    (0..depth).rev().map(|level| if (node >> level) & 1 == 0 { '1' } else { '2' }).collect()
}

/// Inverse of [`node_path`].
pub fn node_from_path(path: &str) -> Option<usize> {
    path.chars().try_fold(1usize, |acc, c| match c {
        '1' => Some(acc * 2),
        '2' => Some(acc * 2 + 1),
        _ => None,
    })
}

/// Tally of the work done by a sketch application, summed over rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub rows: usize,
    /// Row-vector products with an `h×r` projection (leaf-adjacent nodes).
    pub leaf_projections: usize,
    /// Row-vector products with an `r×r` projection (inner nodes).
    pub inner_projections: usize,
    /// Hadamard products of two `r`-vectors.
    pub hadamards: usize,
    /// Self-tensor products `x ⊗ x`.
    pub self_tensors: usize,
}

impl OpCounts {
    /// Counts divided by the number of rows sketched.
    pub fn per_row(&self) -> [f64; 4] {
        let n = self.rows.max(1) as f64;
        [
            self.leaf_projections as f64 / n,
            self.inner_projections as f64 / n,
            self.hadamards as f64 / n,
            self.self_tensors as f64 / n,
        ]
    }
}

/// A feature map approximating the degree-`p` polynomial kernel.
///
/// Queries and keys must go through the same instance.
pub trait FeatureMap: Sync {
    /// Target degree `p` of the non-negative map.
    fn degree(&self) -> u32;
    fn input_dim(&self) -> usize;

    /// Degree-`p/2` signed map. For `p = 2` this is the identity.
    fn with_negativity(&self, a: &Matrix<f64>) -> Result<Matrix<f64>>;

    /// Self-tensored map `φ′(a) = with_negativity(a)^{⊗2}`.
    fn non_negative(&self, a: &Matrix<f64>) -> Result<Matrix<f64>> {
        Ok(row_self_tensor(&self.with_negativity(a)?))
    }

    /// Width of [`FeatureMap::with_negativity`] output.
    fn signed_dim(&self) -> usize;

    fn feature_dim(&self) -> usize {
        self.signed_dim() * self.signed_dim()
    }

    fn check_input(&self, op: &'static str, a: &Matrix<f64>) -> Result<()> {
        if a.cols() != self.input_dim() {
            return Err(Error::shape(
                op,
                format!("input has {} columns, feature map expects {}", a.cols(), self.input_dim()),
            ));
        }
        Ok(())
    }
}

/// Gaussian projections of one combine node.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchNode {
    pub heap_index: usize,
    /// Degree of the sub-recursion this node produces.
    pub degree: usize,
    pub g1: Matrix<f64>,
    pub g2: Matrix<f64>,
}

/// All Gaussian matrices of a degree-`q` sketch, sampled up front.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchTree {
    degree_q: usize,
    input_dim: usize,
    sketch_size: usize,
    seed: u64,
    // indexed by heap index - 1
    nodes: Vec<SketchNode>,
}

/// Seed of the stream that fills projection `which` (1 or 2) of `node`.
pub fn projection_seed(seed: u64, node: usize, which: u64) -> u64 {
    derive_seed(seed, ((node as u64) << 1) | (which - 1))
}

/// Samples the projections for the non-negative degree-`p` map on `h`-dim
/// inputs with sketch size `r`.
pub fn sample_sketch(h: usize, r: usize, p: u32, seed: u64) -> Result<SketchTree> {
    let q = half_degree(p)?;
    if r == 0 {
        return Err(Error::invalid("sketch size r must be at least 1"));
    }
    if h == 0 {
        return Err(Error::invalid("input dimension h must be at least 1"));
    }
    let nodes = (1..q)
        .map(|node| {
            let degree = node_degree(q, node);
            let in_dim = if degree == 2 { h } else { r };
            SketchNode {
                heap_index: node,
                degree,
                g1: GaussianStream::new(projection_seed(seed, node, 1)).gaussian_matrix(in_dim, r, 1.0),
                g2: GaussianStream::new(projection_seed(seed, node, 2)).gaussian_matrix(in_dim, r, 1.0),
            }
        })
        .collect();
    Ok(SketchTree { degree_q: q, input_dim: h, sketch_size: r, seed, nodes })
}

impl SketchTree {
    pub fn degree_q(&self) -> usize {
        self.degree_q
    }

    pub fn sketch_size(&self) -> usize {
        self.sketch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> &[SketchNode] {
        &self.nodes
    }

    pub fn gaussian_count(&self) -> usize {
        2 * self.nodes.len()
    }

    /// Signed degree-`q` sketch of every row, tallying work into `counts`.
    pub fn apply_with_negativity_counted(&self, a: &Matrix<f64>, counts: &mut OpCounts) -> Result<Matrix<f64>> {
        self.check_input("apply_with_negativity", a)?;
        counts.rows += a.rows();
        if self.degree_q == 1 {
            return Ok(a.clone());
        }
        Ok(self.eval(1, a, counts))
    }

    fn eval(&self, node: usize, a: &Matrix<f64>, counts: &mut OpCounts) -> Matrix<f64> {
        let spec = &self.nodes[node - 1];
        let rows = a.rows();
        let (x1, x2) = if spec.degree == 2 {
            counts.leaf_projections += 2 * rows;
            (matmul(a, &spec.g1), matmul(a, &spec.g2))
        } else {
            let m1 = self.eval(2 * node, a, counts);
            let m2 = self.eval(2 * node + 1, a, counts);
            counts.inner_projections += 2 * rows;
            (matmul(&m1, &spec.g1), matmul(&m2, &spec.g2))
        };
        counts.hadamards += rows;
        // shapes are fixed by construction
        let prod = hadamard(&x1.unwrap(), &x2.unwrap()).unwrap();
        prod.scale((1.0 / self.sketch_size as f64).sqrt())
    }

    pub fn apply_non_negative_counted(&self, a: &Matrix<f64>, counts: &mut OpCounts) -> Result<Matrix<f64>> {
        let m = self.apply_with_negativity_counted(a, counts)?;
        counts.self_tensors += m.rows();
        Ok(row_self_tensor(&m))
    }

    /// Serializes the tree into a PSKB bundle.
    pub fn to_bundle_bytes(&self) -> Result<Vec<u8>> {
        let manifest = TreeManifest {
            kind: "sketch-tree".into(),
            h: self.input_dim,
            r: self.sketch_size,
            q: self.degree_q,
            seed: self.seed,
            nodes: self
                .nodes
                .iter()
                .map(|n| TreeNodeEntry {
                    path: node_path(n.heap_index),
                    degree: n.degree,
                    matrices: vec!["g1".into(), "g2".into()],
                })
                .collect(),
        };
        let mats: Vec<&Matrix<f64>> = self.nodes.iter().flat_map(|n| [&n.g1, &n.g2]).collect();
        io::encode_bundle(&manifest, &mats)
    }

    pub fn from_bundle_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, mats): (TreeManifest, Vec<Matrix<f64>>) = io::decode_bundle(bytes)?;
        let bad = |msg: String| Error::Format { offset: 0, message: msg };
        if manifest.kind != "sketch-tree" {
            return Err(bad(format!("bundle kind {:?} is not a sketch tree", manifest.kind)));
        }
        let q = manifest.q;
        if !q.is_power_of_two() || q > 8 || manifest.r == 0 || manifest.h == 0 {
            return Err(bad(format!("invalid tree parameters q={q} r={} h={}", manifest.r, manifest.h)));
        }
        if manifest.nodes.len() != q - 1 || mats.len() != 2 * (q - 1) {
            return Err(bad("node count does not match the tree degree".into()));
        }
        let mut nodes = Vec::with_capacity(q - 1);
        let mut it = mats.into_iter();
        for (idx, entry) in manifest.nodes.iter().enumerate() {
            let heap = idx + 1;
            if node_from_path(&entry.path) != Some(heap) || entry.degree != node_degree(q, heap) {
                return Err(bad(format!("unexpected node entry {:?}", entry.path)));
            }
            let in_dim = if entry.degree == 2 { manifest.h } else { manifest.r };
            let (g1, g2) = (it.next().unwrap(), it.next().unwrap());
            for g in [&g1, &g2] {
                if g.shape() != (in_dim, manifest.r) {
                    return Err(bad(format!("node {:?} has a {:?} projection", entry.path, g.shape())));
                }
            }
            nodes.push(SketchNode { heap_index: heap, degree: entry.degree, g1, g2 });
        }
        Ok(SketchTree { degree_q: q, input_dim: manifest.h, sketch_size: manifest.r, seed: manifest.seed, nodes })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeManifest {
    kind: String,
    h: usize,
    r: usize,
    q: usize,
    seed: u64,
    nodes: Vec<TreeNodeEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeNodeEntry {
    path: String,
    degree: usize,
    matrices: Vec<String>,
}

impl FeatureMap for SketchTree {
    fn degree(&self) -> u32 {
        2 * self.degree_q as u32
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn signed_dim(&self) -> usize {
        if self.degree_q == 1 {
            self.input_dim
        } else {
            self.sketch_size
        }
    }

    fn with_negativity(&self, a: &Matrix<f64>) -> Result<Matrix<f64>> {
        self.apply_with_negativity_counted(a, &mut OpCounts::default())
    }
}

/// Signed degree-`q` sketch of the rows of `a`.
pub fn apply_with_negativity<T: Element>(a: &Matrix<T>, tree: &SketchTree) -> Result<Matrix<T>> {
    Ok(tree.with_negativity(&a.to_f64())?.cast())
}

/// Non-negative degree-`2q` features `φ′(a)` of the rows of `a`.
pub fn apply_non_negative<T: Element>(a: &Matrix<T>, tree: &SketchTree) -> Result<Matrix<T>> {
    Ok(tree.non_negative(&a.to_f64())?.cast())
}

/// Approximate kernel matrix `φ′(Q)φ′(K)ᵀ`, computed as `(L Rᵀ)²` from the
/// signed sketches so every entry is an exact square.
pub fn sketched_kernel<F: FeatureMap + ?Sized>(q: &Matrix<f64>, k: &Matrix<f64>, fmap: &F) -> Result<Matrix<f64>> {
    let l = fmap.with_negativity(q)?;
    let r = fmap.with_negativity(k)?;
    Ok(matmul_transpose_b(&l, &r)?.map(|v| v * v))
}

/// Exact kernel matrix `(QKᵀ)ᵖ`, by repeated squaring.
pub fn exact_kernel(q: &Matrix<f64>, k: &Matrix<f64>, p: u32) -> Result<Matrix<f64>> {
    Ok(matmul_transpose_b(q, k)?.map(|v| crate::matrix::even_pow(v, p)))
}

/// Desk-scale limit on rows for [`amm_relative_error`].
pub const AMM_MAX_ROWS: usize = 512;
/// Desk-scale limit on columns for [`amm_relative_error`].
pub const AMM_MAX_DIM: usize = 16;

/// Relative AMM error
/// `‖φ′(Q)φ′(K)ᵀ − (QKᵀ)ᵖ‖_F / (‖Q^{⊗p}‖_F ‖K^{⊗p}‖_F)`, with the denominator
/// evaluated from row norms as `√(Σᵢ‖qᵢ‖^{2p}) · √(Σⱼ‖kⱼ‖^{2p})`. Returns 0
/// when the denominator vanishes.
pub fn amm_relative_error<T: Element>(q: &Matrix<T>, k: &Matrix<T>, tree: &SketchTree, p: u32) -> Result<f64> {
    if p != tree.degree() {
        return Err(Error::invalid(format!("p = {p} does not match the tree's degree {}", tree.degree())));
    }
    if q.cols() != k.cols() {
        return Err(Error::shape("amm_relative_error", format!("{:?} vs {:?}", q.shape(), k.shape())));
    }
    for (what, value, cap) in [("rows", q.rows().max(k.rows()), AMM_MAX_ROWS), ("h", q.cols(), AMM_MAX_DIM)] {
        if value > cap {
            return Err(Error::CapExceeded { what, value, cap });
        }
    }
    let (q, k) = (q.to_f64(), k.to_f64());
    let approx = sketched_kernel(&q, &k, tree)?;
    let exact = exact_kernel(&q, &k, p)?;
    let tensor_norm = |m: &Matrix<f64>| {
        m.row_iter()
            .map(|row| {
                let sq: f64 = row.iter().map(|v| v * v).sum();
                sq.powi(p as i32)
            })
            .sum::<f64>()
            .sqrt()
    };
    let denom = tensor_norm(&q) * tensor_norm(&k);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(frobenius_norm(&approx.sub(&exact)?) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn paths_round_trip() {
        assert_eq!(node_path(1), "");
        assert_eq!(node_path(2), "1");
        assert_eq!(node_path(3), "2");
        assert_eq!(node_path(6), "21");
        for i in 1..64 {
            assert_eq!(node_from_path(&node_path(i)), Some(i));
        }
        assert_eq!(node_from_path("3"), None);
    }

    #[test]
    fn degree_validation() {
        for p in [0, 1, 3, 6, 12, 32] {
            assert!(sample_sketch(4, 4, p, 0).is_err(), "p = {p}");
        }
        assert!(sample_sketch(4, 0, 4, 0).is_err());
        assert!(sample_sketch(0, 4, 4, 0).is_err());
    }

    #[test]
    fn matrix_counts_and_shapes() {
        let t2 = sample_sketch(8, 16, 2, 1).unwrap();
        assert_eq!(t2.gaussian_count(), 0);

        let t4 = sample_sketch(8, 16, 4, 1).unwrap();
        assert_eq!(t4.gaussian_count(), 2);
        assert_eq!(t4.nodes()[0].g1.shape(), (8, 16));
        assert_eq!(t4.nodes()[0].g2.shape(), (8, 16));

        // T(q) = 2T(q/2) + 2 with T(1) = 0
        fn t(q: usize) -> usize {
            if q == 1 {
                0
            } else {
                2 * t(q / 2) + 2
            }
        }
        let t8 = sample_sketch(5, 7, 8, 1).unwrap();
        assert_eq!(t8.gaussian_count(), t(4));
        let shapes: Vec<_> = t8.nodes().iter().flat_map(|n| [n.g1.shape(), n.g2.shape()]).collect();
        assert_eq!(shapes.iter().filter(|&&s| s == (5, 7)).count(), 4);
        assert_eq!(shapes.iter().filter(|&&s| s == (7, 7)).count(), 2);
        assert_eq!(sample_sketch(3, 3, 16, 1).unwrap().gaussian_count(), t(8));
    }

    #[test]
    fn sampling_is_deterministic_and_independent_per_node() {
        let a = sample_sketch(4, 6, 8, 99).unwrap();
        assert_eq!(a, sample_sketch(4, 6, 8, 99).unwrap());
        assert_ne!(a, sample_sketch(4, 6, 8, 100).unwrap());
        assert_ne!(a.nodes()[1].g1, a.nodes()[2].g1);
        assert_ne!(a.nodes()[1].g1, a.nodes()[1].g2);
    }

    #[test]
    fn degree_one_is_identity() {
        let t = sample_sketch(3, 5, 2, 0).unwrap();
        let a: Matrix = rng::gaussian(4, 3, 2);
        assert_eq!(apply_with_negativity(&a, &t).unwrap(), a);
        assert_eq!(apply_non_negative(&a, &t).unwrap(), row_self_tensor(&a));
    }

    #[test]
    fn degree_two_single_entry_formula() {
        let r = 9;
        let t = sample_sketch(1, r, 4, 5).unwrap();
        let a = Matrix::<f64>::from_rows(&[[1.0]]).unwrap();
        let out = apply_with_negativity(&a, &t).unwrap();
        let (g1, g2) = (&t.nodes()[0].g1, &t.nodes()[0].g2);
        for i in 0..r {
            let expected = (1.0 / r as f64).sqrt() * (g1.get(0, i) * g2.get(0, i));
            assert!((out.get(0, i) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_rows_map_to_zero_features() {
        let t = sample_sketch(6, 4, 8, 3).unwrap();
        let out = apply_non_negative(&Matrix::<f64>::zeros(2, 6), &t).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(out.cols(), 16);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let t = sample_sketch(6, 4, 4, 3).unwrap();
        assert!(matches!(apply_with_negativity(&Matrix::<f64>::zeros(2, 5), &t), Err(Error::Shape { .. })));
    }

    #[test]
    fn op_counts_follow_tree_shape() {
        for p in [4u32, 8, 16] {
            let q = (p / 2) as usize;
            let t = sample_sketch(5, 3, p, 0).unwrap();
            let mut c = OpCounts::default();
            t.apply_non_negative_counted(&Matrix::zeros(7, 5), &mut c).unwrap();
            assert_eq!(c.per_row(), [q as f64, (q - 2) as f64, (q - 1) as f64, 1.0]);
        }
    }

    #[test]
    fn amm_edge_cases() {
        let t = sample_sketch(4, 8, 4, 0).unwrap();
        let z = Matrix::<f64>::zeros(5, 4);
        assert_eq!(amm_relative_error(&z, &z, &t, 4).unwrap(), 0.0);
        assert!(amm_relative_error(&z, &z, &t, 8).is_err());
        let big = Matrix::<f64>::zeros(600, 4);
        assert!(matches!(amm_relative_error(&big, &big, &t, 4), Err(Error::CapExceeded { .. })));
        let t2 = sample_sketch(4, 8, 2, 0).unwrap();
        let q: Matrix = rng::unit_rows(16, 4, 1);
        let k: Matrix = rng::unit_rows(16, 4, 2);
        assert!(amm_relative_error(&q, &k, &t2, 2).unwrap() <= 1e-10);
    }

    #[test]
    fn bundle_round_trip() {
        let t = sample_sketch(3, 4, 8, 17).unwrap();
        let bytes = t.to_bundle_bytes().unwrap();
        let back = SketchTree::from_bundle_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bundle_bytes().unwrap(), bytes);
        assert!(SketchTree::from_bundle_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
