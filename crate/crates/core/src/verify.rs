//! Invariant suites run by `polysketch verify`.
//!
//! Each check compares a kernel against a closed form, a hand-computed value
//! or a brute-force loop written here independently of the kernel's own code
//! path.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::attention::{
    absorption_transform, exact_poly_attention, exact_poly_weights, polysketch_attention, polysketch_attention_naive,
    raw_polynomial_weights, softmax_attention,
};
use crate::causal::{
    causal_exact_poly_attention, causal_polysketch_attention, causal_polysketch_attention_naive,
    causal_polysketch_denominators, lt_multiply_blocked, lt_multiply_naive, prefix_states,
};
use crate::error::{Error, Result};
use crate::learnable::{init_params, DenseBlockParams, LearnableSketchParams};
use crate::matrix::{
    layer_norm_rows, lt_mask, matmul_transpose_b, relative_frobenius_error, row_self_tensor, Element, Matrix, Precision,
};
use crate::rng::{self, derive_seed};
use crate::sketch::{amm_relative_error, sample_sketch, FeatureMap, OpCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Sketch,
    Attention,
    Causal,
    Learnable,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["sketch", "attention", "causal", "learnable", "all"];

    fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Sketch, Suite::Attention, Suite::Causal, Suite::Learnable],
            s => vec![s],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = *self as usize;
        f.pad(Self::NAMES[i])
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sketch" => Suite::Sketch,
            "attention" => Suite::Attention,
            "causal" => Suite::Causal,
            "learnable" => Suite::Learnable,
            "all" => Suite::All,
            other => return Err(Error::invalid(format!("unknown suite {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: Suite,
    pub seed: u64,
    pub precision: Precision,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {:<10} {:<44} {}", if c.passed { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail)?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} checks, {} failed (suite {}, seed {}, {})",
            self.checks.len(),
            failed,
            self.suite,
            self.seed,
            self.precision
        )
    }
}

pub fn run(suite: Suite, seed: u64, precision: Precision) -> Report {
    let checks = match precision {
        Precision::F32 => run_typed::<f32>(suite, seed),
        Precision::F64 => run_typed::<f64>(suite, seed),
    };
    Report { suite, seed, precision, passed: checks.iter().all(|c| c.passed), checks }
}

fn run_typed<T: Element>(suite: Suite, seed: u64) -> Vec<Check> {
    let mut ctx = Ctx::<T> { suite, seed, checks: Vec::new(), _t: std::marker::PhantomData };
    for s in suite.members() {
        ctx.suite = s;
        let outcome = match s {
            Suite::Sketch => sketch_suite(&mut ctx),
            Suite::Attention => attention_suite(&mut ctx),
            Suite::Causal => causal_suite(&mut ctx),
            Suite::Learnable => learnable_suite(&mut ctx),
            Suite::All => unreachable!(),
        };
        if let Err(e) = outcome {
            ctx.record("suite completed", false, format!("error: {e}"));
        }
    }
    ctx.checks
}

struct Ctx<T> {
    suite: Suite,
    seed: u64,
    checks: Vec<Check>,
    _t: std::marker::PhantomData<T>,
}

impl<T: Element> Ctx<T> {
    fn record(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { suite: self.suite, name: name.to_string(), passed, detail });
    }

    /// Tolerance adjusted for the storage precision.
    fn tol(&self, f64_tol: f64) -> f64 {
        match T::PRECISION {
            Precision::F64 => f64_tol,
            Precision::F32 => f64_tol.max(1e-4),
        }
    }

    fn below(&mut self, name: &str, worst: f64, tol: f64) {
        let tol = self.tol(tol);
        self.record(name, worst <= tol, format!("max {worst:.3e} <= {tol:.0e}"));
    }

    fn seed(&self, key: u64) -> u64 {
        derive_seed(self.seed, key)
    }

    /// Input in storage precision plus the `f64` view of the stored values.
    fn gaussian(&self, rows: usize, cols: usize, key: u64) -> (Matrix<T>, Matrix<f64>) {
        let m: Matrix<T> = rng::gaussian(rows, cols, self.seed(key));
        let f = m.to_f64();
        (m, f)
    }

    fn unit_rows(&self, rows: usize, cols: usize, key: u64) -> (Matrix<T>, Matrix<f64>) {
        let m: Matrix<T> = rng::unit_rows(rows, cols, self.seed(key));
        let f = m.to_f64();
        (m, f)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn brute_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn brute_pow(x: f64, p: u32) -> f64 {
    (0..p).fold(1.0, |acc, _| acc * x)
}

/// Causal polynomial attention by direct double loop over `j <= i`.
fn brute_causal_poly(q: &Matrix<f64>, k: &Matrix<f64>, v: &Matrix<f64>, p: u32) -> Matrix<f64> {
    let n = q.rows();
    let h = v.cols();
    let mut out = Matrix::zeros(n, h);
    for i in 0..n {
        let mut mass = 0.0;
        let mut num = vec![0.0; h];
        for j in 0..n {
            if j > i {
                break;
            }
            let s = brute_pow(brute_dot(q.row(i), k.row(j)), p);
            mass += s;
            for c in 0..h {
                num[c] += s * v.get(j, c);
            }
        }
        for c in 0..h {
            out.set(i, c, num[c] / (1.0 + mass));
        }
    }
    out
}

/// Largest negative `φ′` dot product relative to `‖φ′(q)‖‖φ′(k)‖`.
fn worst_negative_dot(phi_q: &Matrix<f64>, phi_k: &Matrix<f64>) -> f64 {
    let norms =
        |m: &Matrix<f64>| -> Vec<f64> { m.row_iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect() };
    let (nq, nk) = (norms(phi_q), norms(phi_k));
    let mut worst = 0.0f64;
    for i in 0..phi_q.rows() {
        for j in 0..phi_k.rows() {
            let d = brute_dot(phi_q.row(i), phi_k.row(j));
            if d < 0.0 {
                worst = worst.max(-d / (nq[i] * nk[j]).max(f64::MIN_POSITIVE));
            }
        }
    }
    worst
}

fn sketch_suite<T: Element>(ctx: &mut Ctx<T>) -> Result<()> {
    // determinism
    let (a, _) = ctx.gaussian(16, 8, 1);
    let t1 = sample_sketch(8, 12, 8, ctx.seed(2))?;
    let t2 = sample_sketch(8, 12, 8, ctx.seed(2))?;
    let same = crate::sketch::apply_non_negative(&a, &t1)? == crate::sketch::apply_non_negative(&a, &t2)?;
    ctx.record("fixed seed gives bit-identical features", same, String::new());

    // degree-2 exactness
    let (qa, qf) = ctx.gaussian(100, 8, 3);
    let (ka, kf) = ctx.gaussian(100, 8, 4);
    let t = sample_sketch(8, 4, 2, ctx.seed(5))?;
    let pq = crate::sketch::apply_non_negative(&qa, &t)?.to_f64();
    let pk = crate::sketch::apply_non_negative(&ka, &t)?.to_f64();
    let mut worst = 0.0f64;
    for i in 0..100 {
        let exact = brute_pow(brute_dot(qf.row(i), kf.row(i)), 2);
        let got = brute_dot(pq.row(i), pk.row(i));
        worst = worst.max((got - exact).abs() / exact.abs().max(1.0));
    }
    ctx.below("p=2 map reproduces <q,k>^2", worst, 1e-10);

    // non-negativity
    let mut min_sq = f64::INFINITY;
    let mut worst_neg = 0.0f64;
    for p in [4u32, 8] {
        for s in 0..20u64 {
            let (q, _) = ctx.gaussian(64, 16, 100 + s);
            let (k, _) = ctx.gaussian(64, 16, 200 + s);
            let tree = sample_sketch(16, 16, p, ctx.seed(300 + s))?;
            let l = tree.with_negativity(&q.to_f64())?;
            let r = tree.with_negativity(&k.to_f64())?;
            let lr = matmul_transpose_b(&l, &r)?;
            min_sq = lr.as_slice().iter().map(|x| x * x).fold(min_sq, f64::min);
            worst_neg = worst_neg.max(worst_negative_dot(&row_self_tensor(&l), &row_self_tensor(&r)));
        }
    }
    ctx.record("(L R^T)^2 weights are >= 0", min_sq >= 0.0, format!("min {min_sq:.3e}"));
    ctx.record(
        "materialized feature dots negative <= 1e-6",
        worst_neg <= 1e-6,
        format!("max relative negative {worst_neg:.3e}"),
    );

    // unbiasedness at q = 2
    let a = Matrix::<f64>::from_rows(&[[0.6, -0.8, 0.0]])?;
    let b = Matrix::<f64>::from_rows(&[[0.3, 0.2, 0.9]])?;
    let truth = brute_pow(brute_dot(a.row(0), b.row(0)), 2);
    let trials = 2000;
    let samples: Vec<f64> = (0..trials)
        .map(|s| {
            let tree = sample_sketch(3, 8, 4, ctx.seed(1000 + s)).expect("valid");
            let sa = tree.with_negativity(&a).expect("shape");
            let sb = tree.with_negativity(&b).expect("shape");
            brute_dot(sa.row(0), sb.row(0))
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    ctx.record(
        "signed sketch is unbiased (3 s.e.)",
        (mean - truth).abs() <= 3.0 * se,
        format!("mean {mean:.4} vs {truth:.4}, s.e. {se:.4}"),
    );

    // AMM scaling
    let (q, _) = ctx.unit_rows(32, 8, 10);
    let (k, _) = ctx.unit_rows(32, 8, 11);
    let mut medians = Vec::new();
    for r in [4usize, 16, 64] {
        let errs = (0..30u64)
            .map(|s| {
                let tree = sample_sketch(8, r, 4, ctx.seed(2000 + s)).expect("valid");
                amm_relative_error(&q, &k, &tree, 4).expect("desk scale")
            })
            .collect();
        medians.push(median(errs));
    }
    let ok = medians.windows(2).all(|w| w[1] <= w[0]) && medians[2] <= 0.6 * medians[0];
    ctx.record("AMM error shrinks with r", ok, format!("medians {medians:.4?} for r = 4, 16, 64"));

    // operation counts
    let mut ok = true;
    let mut detail = String::new();
    for p in [4u32, 8, 16] {
        let q = (p / 2) as f64;
        let tree = sample_sketch(5, 3, p, 0)?;
        let mut counts = OpCounts::default();
        tree.apply_non_negative_counted(&Matrix::zeros(9, 5), &mut counts)?;
        let got = counts.per_row();
        ok &= got == [q, q - 2.0, q - 1.0, 1.0];
        detail.push_str(&format!("p={p}: {got:?} "));
    }
    ctx.record("per-row operation counts", ok, detail);
    Ok(())
}

fn attention_suite<T: Element>(ctx: &mut Ctx<T>) -> Result<()> {
    let (q, _) = ctx.gaussian(12, 6, 1);
    let (k, _) = ctx.gaussian(12, 6, 2);
    let (v, _) = ctx.gaussian(12, 3, 3);

    // α-shift invariance of softmax weights: adding c to every key's
    // projection onto q adds c to every logit of a row
    let mut worst = 0.0f64;
    for s in 0..10u64 {
        let (q, qf) = ctx.gaussian(8, 4, 10 + s);
        let (k, kf) = ctx.gaussian(8, 4, 20 + s);
        let logits = matmul_transpose_b(&qf, &kf)?;
        let shifted = logits.map(|x| x + 37.5);
        let a = crate::matrix::stable_softmax_rows(&logits, 2.0)?;
        let b = crate::matrix::stable_softmax_rows(&shifted, 2.0)?;
        worst = worst.max(a.max_abs_diff(&b)?);
        let _ = softmax_attention(&q, &k, &Matrix::<T>::zeros(8, 1), 2.0)?;
    }
    ctx.below("softmax weights invariant to logit shift", worst, 1e-9);

    let a = raw_polynomial_weights(&q, &k, 0.3, 1.0, 4)?;
    let b = raw_polynomial_weights(&q, &k, 0.3, 7.0, 4)?;
    ctx.below("raw weights invariant in beta", a.weights.max_abs_diff(&b.weights)?, 1e-9);

    // absorption identity on mean-zero rows
    let h = 6;
    let ones = vec![1.0; h];
    let zeros = vec![0.0; h];
    let (qr, _) = ctx.gaussian(10, h, 4);
    let (kr, _) = ctx.gaussian(10, h, 5);
    let qc = layer_norm_rows(&qr.to_f64(), &ones, &zeros, false)?;
    let kc = layer_norm_rows(&kr.to_f64(), &ones, &zeros, false)?;
    let (alpha, beta) = (1.5, 2.5);
    let raw = raw_polynomial_weights(&qc, &kc, alpha, beta, 4)?;
    let (qp, kp) = absorption_transform(&qc, &kc, alpha, beta)?;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let s: Vec<f64> = (0..10).map(|j| brute_pow(brute_dot(qp.row(i), kp.row(j)), 4)).collect();
        let total: f64 = s.iter().sum();
        for j in 0..10 {
            worst = worst.max((raw.weights.get(i, j) - s[j] / total).abs());
        }
    }
    ctx.below("absorption identity", worst, 1e-9);

    let w = exact_poly_weights(&q, &k, 4)?;
    let min_w = w.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let max_row = w.row_iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    ctx.record(
        "exact weights >= 0, row sums < 1",
        min_w >= 0.0 && max_row < 1.0,
        format!("min {min_w:.3e}, max row sum {max_row:.6}"),
    );

    let tree2 = sample_sketch(6, 5, 2, ctx.seed(6))?;
    let got = polysketch_attention(&q, &k, &v, &tree2)?.to_f64();
    let want = exact_poly_attention(&q, &k, &v, 2)?.to_f64();
    ctx.below("polysketch p=2 equals exact", relative_frobenius_error(&got, &want)?, 1e-10);

    let tree4 = sample_sketch(6, 8, 4, ctx.seed(7))?;
    let got = polysketch_attention(&q, &k, &v, &tree4)?.to_f64();
    let want = polysketch_attention_naive(&q.to_f64(), &k.to_f64(), &v.to_f64(), &tree4)?;
    ctx.below("linearized equals materialized", relative_frobenius_error(&got, &want)?, 1e-9);
    Ok(())
}

fn causal_suite<T: Element>(ctx: &mut Ctx<T>) -> Result<()> {
    let hand = Matrix::<T>::from_rows(&[[1.0, 2.0], [3.0, 4.0]])?;
    let masked = lt_mask(&hand)?.to_f64();
    ctx.record(
        "lt_mask keeps the diagonal",
        masked.as_slice() == [1.0, 0.0, 3.0, 4.0],
        format!("{:?}", masked.as_slice()),
    );

    let ones = Matrix::<T>::from_rows(&[[1.0], [1.0]])?;
    let c = Matrix::<T>::from_rows(&[[1.0], [2.0]])?;
    let got = lt_multiply_naive(&ones, &ones, &c)?.to_f64();
    ctx.record("lt-multiply hand value [[1],[3]]", got.as_slice() == [1.0, 3.0], format!("{:?}", got.as_slice()));
    let got = lt_multiply_blocked(&ones, &ones, &c, 1)?.to_f64();
    ctx.record("blocked hand value [[1],[3]]", got.as_slice() == [1.0, 3.0], format!("{:?}", got.as_slice()));

    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in [1usize, 7, 64, 130] {
        for b in [1usize, 8, 64, n] {
            if b > n {
                continue;
            }
            for (m, k) in [(1usize, 5usize), (5, 1), (17, 17)] {
                let key = (n * 1000 + b * 10 + m) as u64;
                let (a, _) = ctx.gaussian(n, m, key);
                let (bb, _) = ctx.gaussian(n, m, key + 1);
                let (cc, _) = ctx.gaussian(n, k, key + 2);
                let fast = lt_multiply_blocked(&a, &bb, &cc, b)?.to_f64();
                let slow = lt_multiply_naive(&a, &bb, &cc)?.to_f64();
                worst = worst.max(relative_frobenius_error(&fast, &slow)?);
                cases += 1;
            }
        }
    }
    ctx.below(&format!("blocked == naive ({cases} cases)"), worst, 1e-10);

    let (q, qf) = ctx.unit_rows(48, 4, 50);
    let (k, kf) = ctx.unit_rows(48, 4, 51);
    let (v, vf) = ctx.gaussian(48, 3, 52);
    let got = causal_exact_poly_attention(&q, &k, &v, 4)?.to_f64();
    let want = brute_causal_poly(&qf, &kf, &vf, 4);
    ctx.below("causal exact equals brute-force loop", relative_frobenius_error(&got, &want)?, 1e-12);

    let tree2 = sample_sketch(4, 3, 2, ctx.seed(53))?;
    let got = causal_polysketch_attention(&q, &k, &v, &tree2, 8, false)?.to_f64();
    ctx.below(
        "causal polysketch p=2 equals brute force",
        relative_frobenius_error(&got, &want_p(&qf, &kf, &vf, 2))?,
        1e-10,
    );

    let tree4 = sample_sketch(4, 8, 4, ctx.seed(54))?;
    let got = causal_polysketch_attention(&q, &k, &v, &tree4, 48, true)?.to_f64();
    ctx.below("single local-exact block equals brute force", relative_frobenius_error(&got, &want)?, 1e-10);

    for local in [false, true] {
        let got = causal_polysketch_attention(&q, &k, &v, &tree4, 8, local)?.to_f64();
        let naive = causal_polysketch_attention_naive(&qf, &kf, &vf, &tree4, 8, local)?;
        ctx.below(
            &format!("blocked sketch equals naive (local={local})"),
            relative_frobenius_error(&got, &naive)?,
            1e-9,
        );
    }

    // causality
    let base = causal_polysketch_attention(&q, &k, &v, &tree4, 8, false)?;
    let mut worst = 0.0f64;
    for cut in [0usize, 13, 31] {
        let mut k2 = k.clone();
        let mut v2 = v.clone();
        for j in cut + 1..48 {
            for c in 0..4 {
                k2.set(j, c, T::from_f64(k2.get(j, c).to_f64() * -3.0 + 1.0));
            }
            for c in 0..3 {
                v2.set(j, c, T::from_f64(7.0));
            }
        }
        let pert = causal_polysketch_attention(&q, &k2, &v2, &tree4, 8, false)?;
        for i in 0..=cut {
            for c in 0..3 {
                worst = worst.max((pert.get(i, c).to_f64() - base.get(i, c).to_f64()).abs());
            }
        }
    }
    ctx.record("future keys/values do not leak", worst <= 1e-12, format!("max change {worst:.3e}"));

    let dens = causal_polysketch_denominators(&qf, &kf, &tree4, 8, false)?;
    let min_den = dens.iter().copied().fold(f64::INFINITY, f64::min);
    ctx.record("denominators >= 1", min_den >= 1.0, format!("min {min_den}"));

    let phi_k = tree4.non_negative(&kf)?;
    let vc = Matrix::<f64>::from_fn(48, 4, |i, j| if j < 3 { vf.get(i, j) } else { 1.0 });
    let states = prefix_states(&phi_k, &vc, 8)?;
    let mut worst = 0.0f64;
    for (l, state) in states.iter().enumerate() {
        let end = ((l + 1) * 8).min(48);
        for f in 0..phi_k.cols() {
            for e in 0..4 {
                let s: f64 = (0..end).map(|j| phi_k.get(j, f) * vc.get(j, e)).sum();
                worst = worst.max((state.get(f, e) - s).abs());
            }
        }
    }
    ctx.below("prefix state equals naive sum", worst, 1e-10);
    Ok(())
}

fn want_p(q: &Matrix<f64>, k: &Matrix<f64>, v: &Matrix<f64>, p: u32) -> Matrix<f64> {
    brute_causal_poly(q, k, v, p)
}

fn learnable_suite<T: Element>(ctx: &mut Ctx<T>) -> Result<()> {
    let (h, r) = (64usize, 32usize);
    let leaf = DenseBlockParams::init(h, r, 0);
    let inner = DenseBlockParams::init(r, r, 0);
    ctx.record(
        "leaf weights = 8hr + 24r^2",
        leaf.weight_count() == 8 * h * r + 24 * r * r,
        format!("{}", leaf.weight_count()),
    );
    ctx.record("inner weights = 32r^2", inner.weight_count() == 32 * r * r, format!("{}", inner.weight_count()));

    let params = init_params(8, 6, 8, ctx.seed(1))?;
    let bound = (6f64).sqrt();
    let mut worst = 0.0f64;
    for s in 0..10u64 {
        let (a, _) = ctx.gaussian(16, 8, 10 + s);
        let out = crate::learnable::apply_learnable_with_negativity(&a, &params)?.to_f64();
        worst = out.as_slice().iter().map(|x| x.abs()).fold(worst, f64::max);
    }
    ctx.record("outputs strictly inside sqrt(r)", worst < bound, format!("max {worst:.4} < {bound:.4}"));

    let (a, _) = ctx.gaussian(40, 8, 30);
    let (b, _) = ctx.gaussian(40, 8, 31);
    let l = params.with_negativity(&a.to_f64())?;
    let rr = params.with_negativity(&b.to_f64())?;
    let neg = worst_negative_dot(&row_self_tensor(&l), &row_self_tensor(&rr));
    ctx.record("self-tensored feature dots >= 0", neg <= 1e-6, format!("max relative negative {neg:.3e}"));

    let bytes = params.to_bundle_bytes()?;
    let again = LearnableSketchParams::from_bundle_bytes(&bytes)?.to_bundle_bytes()?;
    ctx.record("save/load/save is byte-identical", bytes == again, format!("{} bytes", bytes.len()));

    let p4 = init_params(8, 4, 4, ctx.seed(2))?;
    let (q, _) = ctx.unit_rows(64, 8, 40);
    let (k, _) = ctx.unit_rows(64, 8, 41);
    let (v, _) = ctx.gaussian(64, 8, 42);
    let out = causal_polysketch_attention(&q, &k, &v, &p4, 16, false)?;
    let dens = causal_polysketch_denominators(&q.to_f64(), &k.to_f64(), &p4, 16, false)?;
    let min_den = dens.iter().copied().fold(f64::INFINITY, f64::min);
    ctx.record(
        "learnable causal run, denominators >= 1",
        min_den >= 1.0 && out.as_slice().iter().all(|x| x.is_finite()),
        format!("min {min_den:.4}"),
    );
    Ok(())
}
