mod common;

use polysketch::matrix::{matmul_transpose_b, row_self_tensor};
use polysketch::rng::derive_seed;
use polysketch::sketch::{
    amm_relative_error, apply_non_negative, apply_with_negativity, sample_sketch, FeatureMap, OpCounts, SketchTree,
};
use polysketch::{Error, Matrix};
use proptest::prelude::*;

// Median AMM errors measured with `run_amm(n=32, h=8, p=4, 30 trials,
// seed 0)`: 1.017, 0.333, 0.128 for r = 4, 16, 64; thresholds are 2x.
pub const AMM_MEDIAN_THRESHOLDS: [(usize, f64); 3] = [(4, 2.03), (16, 0.67), (64, 0.26)];

#[test]
fn degree_two_tree_is_identity() {
    let t = sample_sketch(5, 7, 2, 1).unwrap();
    assert_eq!(t.degree_q(), 1);
    assert_eq!(t.gaussian_count(), 0);
    let a = common::gaussian(4, 5, 2);
    assert_eq!(apply_with_negativity(&a, &t).unwrap(), a);
    assert_eq!(apply_non_negative(&a, &t).unwrap(), row_self_tensor(&a));
}

#[test]
fn matrix_counts_and_shapes() {
    let t = sample_sketch(8, 16, 4, 0).unwrap();
    assert_eq!(t.gaussian_count(), 2);
    for n in t.nodes() {
        assert_eq!(n.g1.shape(), (8, 16));
        assert_eq!(n.g2.shape(), (8, 16));
    }
    let t = sample_sketch(8, 16, 8, 0).unwrap();
    let shapes: Vec<_> = t.nodes().iter().flat_map(|n| [n.g1.shape(), n.g2.shape()]).collect();
    assert_eq!(shapes.len(), 6);
    assert_eq!(shapes.iter().filter(|s| **s == (8, 16)).count(), 4);
    assert_eq!(shapes.iter().filter(|s| **s == (16, 16)).count(), 2);
    for p in [4u32, 8, 16] {
        assert_eq!(sample_sketch(3, 3, p, 0).unwrap().gaussian_count(), p as usize - 2);
    }
}

#[test]
fn invalid_parameters() {
    for p in [0u32, 1, 3, 6, 12, 32] {
        assert!(matches!(sample_sketch(4, 4, p, 0), Err(Error::InvalidArgument(_))), "p = {p}");
    }
    assert!(sample_sketch(4, 0, 4, 0).is_err());
    let t = sample_sketch(4, 4, 4, 0).unwrap();
    assert!(matches!(apply_with_negativity(&Matrix::<f64>::zeros(2, 5), &t), Err(Error::Shape { .. })));
    let q = common::unit_rows(4, 4, 1);
    assert!(amm_relative_error(&q, &q, &t, 8).is_err());
}

#[test]
fn single_entry_formula() {
    let r = 6;
    let t = sample_sketch(1, r, 4, 11).unwrap();
    let out = apply_with_negativity(&Matrix::<f64>::from_rows(&[[1.0]]).unwrap(), &t).unwrap();
    let node = &t.nodes()[0];
    for i in 0..r {
        let want = (1.0 / r as f64).sqrt() * node.g1.get(0, i) * node.g2.get(0, i);
        assert!((out.get(0, i) - want).abs() <= 1e-15 * want.abs());
    }
}

#[test]
fn matches_recursive_oracle() {
    for p in [4u32, 8, 16] {
        let t = sample_sketch(5, 6, p, p as u64).unwrap();
        let a = common::gaussian(7, 5, 3);
        let got = apply_with_negativity(&a, &t).unwrap();
        let want = common::sketch_rows(&t, &a);
        assert!(common::rel_err(&got, &want) <= 1e-13, "p = {p}");
        let nn = apply_non_negative(&a, &t).unwrap();
        for i in 0..7 {
            assert_eq!(nn.row(i), &common::self_tensor(got.row(i))[..]);
        }
    }
}

#[test]
fn zero_rows_give_zero_features() {
    let t = sample_sketch(4, 5, 8, 9).unwrap();
    let out = apply_non_negative(&Matrix::<f64>::zeros(3, 4), &t).unwrap();
    assert!(out.as_slice().iter().all(|&x| x == 0.0));
}

#[test]
fn degree_two_exactness() {
    let t = sample_sketch(8, 3, 2, 0).unwrap();
    let q = common::gaussian(100, 8, 1);
    let k = common::gaussian(100, 8, 2);
    let fq = apply_non_negative(&q, &t).unwrap();
    let fk = apply_non_negative(&k, &t).unwrap();
    for i in 0..100 {
        let want = common::dot(q.row(i), k.row(i)).powi(2);
        let got = common::dot(fq.row(i), fk.row(i));
        assert!((got - want).abs() <= 1e-10 * want.max(1.0));
    }
    assert!(amm_relative_error(&q.row_block(0, 32), &k.row_block(0, 32), &t, 2).unwrap() <= 1e-10);
}

#[test]
fn unbiased_on_unit_pair() {
    let a = Matrix::<f64>::from_rows(&[[1.0, 0.0]]).unwrap();
    let trials = 10_000;
    let samples: Vec<f64> = (0..trials)
        .map(|s| {
            let t = sample_sketch(2, 4, 4, derive_seed(99, s)).unwrap();
            let x = apply_with_negativity(&a, &t).unwrap();
            common::dot(x.row(0), x.row(0))
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn amm_zero_inputs() {
    let t = sample_sketch(4, 8, 4, 0).unwrap();
    let z = Matrix::<f64>::zeros(6, 4);
    assert_eq!(amm_relative_error(&z, &z, &t, 4).unwrap(), 0.0);
}

#[test]
fn amm_matches_materialized_definition() {
    let (n, h, p) = (5, 3, 4u32);
    let q = common::gaussian(n, h, 1);
    let k = common::gaussian(n, h, 2);
    let t = sample_sketch(h, 8, p, 3).unwrap();
    let fq = apply_non_negative(&q, &t).unwrap();
    let fk = apply_non_negative(&k, &t).unwrap();
    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = common::dot(fq.row(i), fk.row(j)) - common::pow(common::dot(q.row(i), k.row(j)), p);
            num += d * d;
        }
    }
    // ‖Q^{⊗4}‖_F from explicit 81-dimensional tensors
    let tensor4 = |m: &Matrix<f64>| -> f64 {
        let mut s = 0.0;
        for row in m.row_iter() {
            let t2 = common::self_tensor(row);
            s += common::self_tensor(&t2).iter().map(|x| x * x).sum::<f64>();
        }
        s.sqrt()
    };
    let want = num.sqrt() / (tensor4(&q) * tensor4(&k));
    let got = amm_relative_error(&q, &k, &t, p).unwrap();
    assert!((got - want).abs() <= 1e-12 * want.max(1e-300), "{got} vs {want}");
}

#[test]
fn amm_caps() {
    let t = sample_sketch(17, 4, 4, 0).unwrap();
    let q = common::unit_rows(4, 17, 0);
    assert!(matches!(amm_relative_error(&q, &q, &t, 4), Err(Error::CapExceeded { .. })));
    let t = sample_sketch(4, 4, 4, 0).unwrap();
    let q = common::unit_rows(513, 4, 0);
    assert!(matches!(amm_relative_error(&q, &q, &t, 4), Err(Error::CapExceeded { .. })));
}

#[test]
fn amm_medians_below_committed_thresholds() {
    let rows = polysketch::bench::run_amm(&polysketch::bench::AmmSpec {
        n: 32,
        h: 8,
        p: 4,
        r_list: AMM_MEDIAN_THRESHOLDS.iter().map(|x| x.0).collect(),
        trials: 30,
        seed: 0,
        zero_input: false,
    })
    .unwrap();
    let mut prev = f64::INFINITY;
    for (r, threshold) in AMM_MEDIAN_THRESHOLDS {
        let errs: Vec<f64> = rows.iter().filter(|x| x.r == r).map(|x| x.rel_error).collect();
        let med = common::median(errs);
        assert!(med <= threshold, "r = {r}: median {med}");
        assert!(med <= prev);
        prev = med;
    }
}

#[test]
fn op_counts_per_row() {
    for p in [4u32, 8, 16] {
        let q = p as usize / 2;
        let t = sample_sketch(6, 4, p, 1).unwrap();
        let mut c = OpCounts::default();
        t.apply_non_negative_counted(&common::gaussian(11, 6, 2), &mut c).unwrap();
        assert_eq!(c.rows, 11);
        assert_eq!(c.leaf_projections, 11 * q);
        assert_eq!(c.inner_projections, 11 * (q - 2));
        assert_eq!(c.hadamards, 11 * (q - 1));
        assert_eq!(c.self_tensors, 11);
    }
}

#[test]
fn bundle_round_trip_and_rejection() {
    let t = sample_sketch(3, 5, 8, 77).unwrap();
    let bytes = t.to_bundle_bytes().unwrap();
    let back = SketchTree::from_bundle_bytes(&bytes).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.to_bundle_bytes().unwrap(), bytes);
    assert!(SketchTree::from_bundle_bytes(&bytes[..bytes.len() - 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deterministic_given_seed(seed in any::<u64>(), p in prop::sample::select(vec![2u32, 4, 8, 16])) {
        let a = common::gaussian(3, 4, seed ^ 5);
        let x = apply_non_negative(&a, &sample_sketch(4, 5, p, seed).unwrap()).unwrap();
        let y = apply_non_negative(&a, &sample_sketch(4, 5, p, seed).unwrap()).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn squared_weights_non_negative(seed in any::<u64>(), p in prop::sample::select(vec![4u32, 8, 16])) {
        let t = sample_sketch(6, 5, p, seed).unwrap();
        let l = t.with_negativity(&common::gaussian(9, 6, seed ^ 1)).unwrap();
        let r = t.with_negativity(&common::gaussian(9, 6, seed ^ 2)).unwrap();
        let w = matmul_transpose_b(&l, &r).unwrap().map(|x| x * x);
        prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
        let fl = row_self_tensor(&l);
        let fr = row_self_tensor(&r);
        for i in 0..9 {
            for j in 0..9 {
                let d = common::dot(fl.row(i), fr.row(j));
                let scale = common::frob(&fl.row_block(i, i + 1)) * common::frob(&fr.row_block(j, j + 1));
                prop_assert!(d >= -1e-6 * scale);
            }
        }
    }

    #[test]
    fn rows_sketched_independently(seed in any::<u64>(), split in 1usize..6) {
        let t = sample_sketch(4, 3, 8, seed).unwrap();
        let a = common::gaussian(6, 4, seed ^ 3);
        let whole = apply_with_negativity(&a, &t).unwrap();
        let top = apply_with_negativity(&a.row_block(0, split), &t).unwrap();
        prop_assert_eq!(top.as_slice(), &whole.as_slice()[..split * 3]);
    }
}
