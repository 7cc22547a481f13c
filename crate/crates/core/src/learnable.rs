//! Learnable polynomial sketch, forward pass only.
//!
//! Each Gaussian projection of the random sketch is replaced by a small dense
//! network `f`, and every combine node squashes its output as
//! `√r·tanh(√(1/r)·[f₁(M₁) ∗ f₂(M₂)])`. A network maps `in → r` through
//!
//! ```text
//! LN → Linear(in, 8r) → gelu → LN → Linear(8r, r) → Linear(r, 8r) → gelu → Linear(8r, r)
//! ```
//!
//! giving `8·in·r + 24r²` weights: `8hr + 24r²` at leaf-adjacent nodes and
//! `32r²` at inner nodes. `gelu(x) = x·Φ(x)` with the exact Gaussian CDF. Layer
//! norms normalize variance.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::matrix::{hadamard, layer_norm_rows, matmul, Element, Matrix};
use crate::rng::{derive_seed, GaussianStream};
use crate::sketch::{half_degree, node_degree, node_from_path, node_path, FeatureMap};

/// Hidden width multiplier.
pub const HIDDEN_MULT: usize = 8;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerNormParams {
    fn identity(dim: usize) -> Self {
        Self { gain: vec![1.0; dim], bias: vec![0.0; dim] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in×out`, applied as `x·W + b`.
    pub weight: Matrix<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    fn forward(&self, x: &Matrix<f64>) -> Matrix<f64> {
        let mut y = matmul(x, &self.weight).expect("layer shapes fixed at construction");
        for i in 0..y.rows() {
            for (v, b) in y.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }
}

/// One dense network standing in for a Gaussian projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlockParams {
    pub input_norm: LayerNormParams,
    pub up: Linear,
    pub hidden_norm: LayerNormParams,
    pub down: Linear,
    pub up2: Linear,
    pub out: Linear,
}

impl DenseBlockParams {
    /// Parameters initialized with weights `N(0, 1/fan_in)`, zero biases and
    /// identity layer norms.
    pub fn init(in_dim: usize, r: usize, seed: u64) -> Self {
        let wide = HIDDEN_MULT * r;
        let linear = |idx: u64, fan_in: usize, fan_out: usize| Linear {
            weight: GaussianStream::new(derive_seed(seed, idx)).gaussian_matrix(
                fan_in,
                fan_out,
                1.0 / (fan_in as f64).sqrt(),
            ),
            bias: vec![0.0; fan_out],
        };
        Self {
            input_norm: LayerNormParams::identity(in_dim),
            up: linear(0, in_dim, wide),
            hidden_norm: LayerNormParams::identity(wide),
            down: linear(1, wide, r),
            up2: linear(2, r, wide),
            out: linear(3, wide, r),
        }
    }

    /// All-zero weights and biases.
    pub fn zeros(in_dim: usize, r: usize) -> Self {
        let wide = HIDDEN_MULT * r;
        let linear =
            |fan_in: usize, fan_out: usize| Linear { weight: Matrix::zeros(fan_in, fan_out), bias: vec![0.0; fan_out] };
        Self {
            input_norm: LayerNormParams::identity(in_dim),
            up: linear(in_dim, wide),
            hidden_norm: LayerNormParams::identity(wide),
            down: linear(wide, r),
            up2: linear(r, wide),
            out: linear(wide, r),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.up.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.out.weight.cols()
    }

    fn linears(&self) -> [&Linear; 4] {
        [&self.up, &self.down, &self.up2, &self.out]
    }

    pub fn weight_count(&self) -> usize {
        self.linears().iter().map(|l| l.weight.as_slice().len()).sum()
    }

    pub fn bias_count(&self) -> usize {
        self.linears().iter().map(|l| l.bias.len()).sum()
    }

    pub fn norm_param_count(&self) -> usize {
        2 * (self.input_norm.gain.len() + self.hidden_norm.gain.len())
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count() + self.norm_param_count()
    }

    pub fn forward(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "dense_block_forward",
                format!("input has {} columns, block expects {}", x.cols(), self.input_dim()),
            ));
        }
        let x = layer_norm_rows(x, &self.input_norm.gain, &self.input_norm.bias, true)?;
        let x = self.up.forward(&x).map(gelu);
        let x = layer_norm_rows(&x, &self.hidden_norm.gain, &self.hidden_norm.bias, true)?;
        let x = self.down.forward(&x);
        let x = self.up2.forward(&x).map(gelu);
        Ok(self.out.forward(&x))
    }

    /// Matrices in serialization order.
    fn tensors(&self) -> Vec<(&'static str, Matrix<f64>)> {
        let row = |v: &[f64]| Matrix::from_vec_unchecked(1, v.len(), v.to_vec());
        vec![
            ("ln_in.gain", row(&self.input_norm.gain)),
            ("ln_in.bias", row(&self.input_norm.bias)),
            ("up.weight", self.up.weight.clone()),
            ("up.bias", row(&self.up.bias)),
            ("ln_hidden.gain", row(&self.hidden_norm.gain)),
            ("ln_hidden.bias", row(&self.hidden_norm.bias)),
            ("down.weight", self.down.weight.clone()),
            ("down.bias", row(&self.down.bias)),
            ("up2.weight", self.up2.weight.clone()),
            ("up2.bias", row(&self.up2.bias)),
            ("out.weight", self.out.weight.clone()),
            ("out.bias", row(&self.out.bias)),
        ]
    }

    fn from_tensors(in_dim: usize, r: usize, it: &mut impl Iterator<Item = Matrix<f64>>) -> Result<Self> {
        let template = Self::zeros(in_dim, r);
        let mut next = |expected: (usize, usize), name: &str| -> Result<Matrix<f64>> {
            let m = it.next().ok_or_else(|| Error::Format { offset: 0, message: format!("missing tensor {name}") })?;
            if m.shape() != expected {
                return Err(Error::Format {
                    offset: 0,
                    message: format!("tensor {name} has shape {:?}, expected {expected:?}", m.shape()),
                });
            }
            Ok(m)
        };
        let mut shapes = template.tensors().into_iter().map(|(name, m)| (name, m.shape()));
        let mut take = || {
            let (name, shape) = shapes.next().unwrap();
            next(shape, name)
        };
        let vec = |m: Matrix<f64>| m.into_vec();
        let ln_in = LayerNormParams { gain: vec(take()?), bias: vec(take()?) };
        let up = Linear { weight: take()?, bias: vec(take()?) };
        let ln_hidden = LayerNormParams { gain: vec(take()?), bias: vec(take()?) };
        let down = Linear { weight: take()?, bias: vec(take()?) };
        let up2 = Linear { weight: take()?, bias: vec(take()?) };
        let out = Linear { weight: take()?, bias: vec(take()?) };
        Ok(Self { input_norm: ln_in, up, hidden_norm: ln_hidden, down, up2, out })
    }
}

/// Dense block forward pass.
pub fn dense_block_forward<T: Element>(x: &Matrix<T>, params: &DenseBlockParams) -> Result<Matrix<T>> {
    Ok(params.forward(&x.to_f64())?.cast())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnableNode {
    pub heap_index: usize,
    pub degree: usize,
    pub f1: DenseBlockParams,
    pub f2: DenseBlockParams,
}

/// Networks of a learnable sketch, laid out on the same recursion tree as
/// [`crate::sketch::SketchTree`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearnableSketchParams {
    degree_q: usize,
    input_dim: usize,
    sketch_size: usize,
    seed: u64,
    nodes: Vec<LearnableNode>,
}

fn learnable_degree(p: u32) -> Result<usize> {
    let q = half_degree(p)?;
    if q < 2 {
        return Err(Error::invalid("learnable sketches need p >= 4 (p = 2 has no networks)"));
    }
    Ok(q)
}

fn network_seed(seed: u64, node: usize, which: u64) -> u64 {
    // distinct key space from the Gaussian sketch
    derive_seed(seed ^ 0x6c65_6172_6e61_626c, ((node as u64) << 1) | (which - 1))
}

/// Randomly initialized learnable sketch for the degree-`p` non-negative map.
pub fn init_params(h: usize, r: usize, p: u32, seed: u64) -> Result<LearnableSketchParams> {
    LearnableSketchParams::build(h, r, p, seed, |in_dim, node, which| {
        DenseBlockParams::init(in_dim, r, network_seed(seed, node, which))
    })
}

impl LearnableSketchParams {
    fn build(
        h: usize,
        r: usize,
        p: u32,
        seed: u64,
        mut make: impl FnMut(usize, usize, u64) -> DenseBlockParams,
    ) -> Result<Self> {
        let q = learnable_degree(p)?;
        if r == 0 || h == 0 {
            return Err(Error::invalid("h and r must be at least 1"));
        }
        let nodes = (1..q)
            .map(|node| {
                let degree = node_degree(q, node);
                let in_dim = if degree == 2 { h } else { r };
                LearnableNode { heap_index: node, degree, f1: make(in_dim, node, 1), f2: make(in_dim, node, 2) }
            })
            .collect();
        Ok(Self { degree_q: q, input_dim: h, sketch_size: r, seed, nodes })
    }

    /// Sketch whose networks all have zero weights and biases.
    pub fn zeros(h: usize, r: usize, p: u32) -> Result<Self> {
        Self::build(h, r, p, 0, |in_dim, _, _| DenseBlockParams::zeros(in_dim, r))
    }

    pub fn degree_q(&self) -> usize {
        self.degree_q
    }

    pub fn sketch_size(&self) -> usize {
        self.sketch_size
    }

    pub fn nodes(&self) -> &[LearnableNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [LearnableNode] {
        &mut self.nodes
    }

    pub fn network_count(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(|n| n.f1.param_count() + n.f2.param_count()).sum()
    }

    fn eval(&self, node: usize, a: &Matrix<f64>) -> Result<Matrix<f64>> {
        let spec = &self.nodes[node - 1];
        let (x1, x2) = if spec.degree == 2 {
            (spec.f1.forward(a)?, spec.f2.forward(a)?)
        } else {
            (spec.f1.forward(&self.eval(2 * node, a)?)?, spec.f2.forward(&self.eval(2 * node + 1, a)?)?)
        };
        let r = self.sketch_size as f64;
        let bound = r.sqrt();
        let scale = (1.0 / r).sqrt();
        Ok(hadamard(&x1, &x2)?.map(|v| {
            let y = bound * (scale * v).tanh();
            // tanh saturates to ±1 in floating point; keep the bound strict
            if y.abs() >= bound {
                (bound * y.signum()).next_toward_zero()
            } else {
                y
            }
        }))
    }

    pub fn to_bundle_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::new();
        let mut mats = Vec::new();
        for n in &self.nodes {
            for (which, f) in [("f1", &n.f1), ("f2", &n.f2)] {
                let tensors = f.tensors();
                entries.push(NetworkEntry {
                    path: node_path(n.heap_index),
                    degree: n.degree,
                    network: which.into(),
                    input_dim: f.input_dim(),
                    tensors: tensors
                        .iter()
                        .map(|(name, m)| TensorEntry { name: (*name).into(), rows: m.rows(), cols: m.cols() })
                        .collect(),
                });
                mats.extend(tensors.into_iter().map(|(_, m)| m));
            }
        }
        let manifest = LearnableManifest {
            kind: "learnable-sketch".into(),
            h: self.input_dim,
            r: self.sketch_size,
            q: self.degree_q,
            seed: self.seed,
            hidden: [HIDDEN_MULT * self.sketch_size, self.sketch_size, HIDDEN_MULT * self.sketch_size],
            networks: entries,
        };
        let refs: Vec<&Matrix<f64>> = mats.iter().collect();
        io::encode_bundle(&manifest, &refs)
    }

    pub fn from_bundle_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, mats): (LearnableManifest, Vec<Matrix<f64>>) = io::decode_bundle(bytes)?;
        let bad = |msg: String| Error::Format { offset: 0, message: msg };
        if manifest.kind != "learnable-sketch" {
            return Err(bad(format!("bundle kind {:?} is not a learnable sketch", manifest.kind)));
        }
        let q = manifest.q;
        if !q.is_power_of_two() || !(2..=8).contains(&q) || manifest.h == 0 || manifest.r == 0 {
            return Err(bad(format!("invalid sketch parameters q={q} h={} r={}", manifest.h, manifest.r)));
        }
        if manifest.networks.len() != 2 * (q - 1) {
            return Err(bad("network count does not match the tree degree".into()));
        }
        let mut it = mats.into_iter();
        let mut nodes = Vec::with_capacity(q - 1);
        for (idx, pair) in manifest.networks.chunks(2).enumerate() {
            let heap = idx + 1;
            let degree = node_degree(q, heap);
            let in_dim = if degree == 2 { manifest.h } else { manifest.r };
            for (e, name) in pair.iter().zip(["f1", "f2"]) {
                if node_from_path(&e.path) != Some(heap) || e.network != name || e.input_dim != in_dim {
                    return Err(bad(format!("unexpected network entry {:?}/{}", e.path, e.network)));
                }
            }
            let f1 = DenseBlockParams::from_tensors(in_dim, manifest.r, &mut it)?;
            let f2 = DenseBlockParams::from_tensors(in_dim, manifest.r, &mut it)?;
            nodes.push(LearnableNode { heap_index: heap, degree, f1, f2 });
        }
        if it.next().is_some() {
            return Err(bad("extra tensors after the last network".into()));
        }
        Ok(Self { degree_q: q, input_dim: manifest.h, sketch_size: manifest.r, seed: manifest.seed, nodes })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LearnableManifest {
    kind: String,
    h: usize,
    r: usize,
    q: usize,
    seed: u64,
    hidden: [usize; 3],
    networks: Vec<NetworkEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkEntry {
    path: String,
    degree: usize,
    network: String,
    input_dim: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn save_params(path: impl AsRef<Path>, params: &LearnableSketchParams) -> Result<()> {
    fs::write(path, params.to_bundle_bytes()?)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<LearnableSketchParams> {
    LearnableSketchParams::from_bundle_bytes(&fs::read(path)?)
}

impl FeatureMap for LearnableSketchParams {
    fn degree(&self) -> u32 {
        2 * self.degree_q as u32
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn signed_dim(&self) -> usize {
        self.sketch_size
    }

    fn with_negativity(&self, a: &Matrix<f64>) -> Result<Matrix<f64>> {
        self.check_input("apply_learnable_with_negativity", a)?;
        self.eval(1, a)
    }
}

pub fn apply_learnable_with_negativity<T: Element>(a: &Matrix<T>, params: &LearnableSketchParams) -> Result<Matrix<T>> {
    Ok(params.with_negativity(&a.to_f64())?.cast())
}

pub fn apply_learnable_non_negative<T: Element>(a: &Matrix<T>, params: &LearnableSketchParams) -> Result<Matrix<T>> {
    Ok(params.non_negative(&a.to_f64())?.cast())
}
