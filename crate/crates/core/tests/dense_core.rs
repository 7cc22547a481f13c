mod common;

use polysketch::io::{decode_pskm, pskm_bytes, read_csv_from, write_csv_to, AnyMatrix};
use polysketch::matrix::{
    entrywise_pow, frobenius_norm, hadamard, layer_norm_rows, lt_mask, matmul, row_self_tensor, stable_softmax_rows,
};
use polysketch::{Error, Matrix};
use proptest::prelude::*;

fn m(rows: &[&[f64]]) -> Matrix<f64> {
    Matrix::from_rows(rows).unwrap()
}

#[test]
fn matmul_examples() {
    let i2 = Matrix::<f64>::identity(2);
    assert_eq!(matmul(&i2, &i2).unwrap(), i2);
    let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let ones = m(&[&[1.0], &[1.0]]);
    let got = matmul(&a, &ones).unwrap();
    assert_eq!(got, m(&[&[3.0], &[7.0]]));
    assert_eq!(got, common::matmul(&a, &ones));
    assert_eq!(matmul(&a, &Matrix::zeros(2, 3)).unwrap(), Matrix::zeros(2, 3));
    assert!(matches!(matmul(&a, &Matrix::zeros(3, 1)), Err(Error::Shape { .. })));
}

#[test]
fn hadamard_examples() {
    let a = common::gaussian(3, 4, 1);
    assert_eq!(hadamard(&a, &Matrix::filled(3, 4, 1.0)).unwrap(), a);
    assert_eq!(hadamard(&m(&[&[1.0, 2.0]]), &m(&[&[3.0, 4.0]])).unwrap(), m(&[&[3.0, 8.0]]));
    assert_eq!(hadamard(&a, &Matrix::zeros(3, 4)).unwrap(), Matrix::zeros(3, 4));
    assert!(hadamard(&a, &Matrix::zeros(4, 3)).is_err());
}

#[test]
fn self_tensor_examples() {
    assert_eq!(row_self_tensor(&m(&[&[1.0, 2.0]])), m(&[&[1.0, 2.0, 2.0, 4.0]]));
    assert_eq!(row_self_tensor(&Matrix::<f64>::zeros(2, 3)), Matrix::zeros(2, 9));
    let a = row_self_tensor(&m(&[&[1.0, 2.0]]));
    let b = row_self_tensor(&m(&[&[3.0, 1.0]]));
    assert_eq!(common::dot(a.row(0), b.row(0)), 25.0);
}

#[test]
fn entrywise_pow_examples() {
    assert_eq!(entrywise_pow(&m(&[&[2.0]]), 4).unwrap(), m(&[&[16.0]]));
    assert_eq!(entrywise_pow(&m(&[&[-1.0]]), 2).unwrap(), m(&[&[1.0]]));
    assert_eq!(entrywise_pow(&Matrix::<f64>::zeros(2, 2), 6).unwrap(), Matrix::zeros(2, 2));
    for p in [0, 1, 3, 5] {
        assert!(entrywise_pow(&m(&[&[2.0]]), p).is_err(), "p = {p}");
    }
}

#[test]
fn lt_mask_examples() {
    let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
    assert_eq!(lt_mask(&a).unwrap(), m(&[&[1.0, 0.0], &[3.0, 4.0]]));
    let i3 = Matrix::<f64>::identity(3);
    assert_eq!(lt_mask(&i3).unwrap(), i3);
    assert!(lt_mask(&Matrix::<f64>::zeros(2, 3)).is_err());
}

#[test]
fn frobenius_examples() {
    assert_eq!(frobenius_norm(&Matrix::<f64>::identity(2)), 2f64.sqrt());
    assert_eq!(frobenius_norm(&m(&[&[3.0, 4.0]])), 5.0);
    assert_eq!(frobenius_norm(&Matrix::<f64>::zeros(3, 3)), 0.0);
    // f32 storage, f64 accumulation: 3e19² overflows f32 but not f64
    let big = Matrix::<f32>::from_rows(&[[3e19, 4e19]]).unwrap();
    assert!((frobenius_norm(&big) / 5e19 - 1.0).abs() < 1e-6);
}

#[test]
fn layer_norm_examples() {
    let row = m(&[&[1.0, 2.0, 3.0]]);
    let (g, b) = (vec![1.0; 3], vec![0.0; 3]);
    assert_eq!(layer_norm_rows(&row, &g, &b, false).unwrap(), m(&[&[-1.0, 0.0, 1.0]]));
    let out = layer_norm_rows(&row, &g, &b, true).unwrap();
    let s = (2.0f64 / 3.0).sqrt();
    for (got, want) in out.row(0).iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!((out.get(0, 2) - 1.2247).abs() < 1e-4);
    let bias = vec![0.5, -1.0, 2.0];
    let flat = layer_norm_rows(&m(&[&[5.0, 5.0, 5.0]]), &g, &bias, true).unwrap();
    assert_eq!(flat.row(0), &bias[..]);
}

#[test]
fn softmax_examples() {
    let single = stable_softmax_rows(&m(&[&[3.0], &[-100.0]]), 1.0).unwrap();
    assert_eq!(single.as_slice(), &[1.0, 1.0]);
    let even = stable_softmax_rows(&m(&[&[7.0, 7.0]]), 2.0).unwrap();
    assert_eq!(even.as_slice(), &[0.5, 0.5]);
    let x = common::gaussian(4, 6, 2);
    let beta = 3.0;
    let shifted = x.map(|v| v + 1e6 * beta);
    let a = stable_softmax_rows(&x, beta).unwrap();
    let b = stable_softmax_rows(&shifted, beta).unwrap();
    assert!(a.max_abs_diff(&b).unwrap() <= 1e-6);
    assert!(stable_softmax_rows(&x, 0.0).is_err());
}

#[test]
fn constructors_reject_non_finite() {
    assert!(matches!(Matrix::<f64>::new(1, 2, vec![1.0, f64::NAN]), Err(Error::NonFinite { row: 0, col: 1 })));
    assert!(Matrix::<f32>::new(2, 2, vec![0.0; 3]).is_err());
    assert!(Matrix::<f64>::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn pskm_header_layout() {
    let a = Matrix::<f32>::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
    let bytes = pskm_bytes(&a);
    assert_eq!(&bytes[..4], b"PSKM");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(bytes[8], 0);
    assert_eq!(u64::from_le_bytes(bytes[9..17].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[17..25].try_into().unwrap()), 3);
    assert_eq!(bytes.len(), 25 + 3 * 4);
    assert_eq!(f32::from_le_bytes(bytes[29..33].try_into().unwrap()), 2.0);
}

#[test]
fn pskm_rejects_malformed() {
    let good = pskm_bytes(&common::gaussian(2, 2, 3));
    assert!(matches!(decode_pskm(&good[..good.len() - 1]), Err(Error::Format { .. })));
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(decode_pskm(&bad_magic), Err(Error::Format { offset: 0, .. })));
    let mut bad_dtype = good.clone();
    bad_dtype[8] = 9;
    assert!(matches!(decode_pskm(&bad_dtype), Err(Error::Format { offset: 8, .. })));
    let mut nan = good.clone();
    nan[25..33].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(decode_pskm(&nan), Err(Error::Format { offset: 25, .. })));
    let mut trailing = good;
    trailing.push(0);
    assert!(decode_pskm(&trailing).is_err());
}

#[test]
fn csv_header_and_round_trip() {
    let a = m(&[&[1.5, -2.0], &[0.1, 3e-12]]);
    let mut w = csv::Writer::from_writer(Vec::new());
    write_csv_to(&mut w, &a).unwrap();
    let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
    assert!(text.starts_with("r0,r1\n"));
    let back: Matrix<f64> = read_csv_from(text.as_bytes()).unwrap();
    assert_eq!(back, a);
    assert!(read_csv_from::<_, f64>("r0,r1\n1,nan\n".as_bytes()).is_err());
    assert!(read_csv_from::<_, f64>("r0,r1\n1,x\n".as_bytes()).is_err());
}

fn small_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

proptest! {
    #[test]
    fn matmul_matches_triple_loop(a in small_matrix(6, 6), seed in any::<u64>()) {
        let b = common::gaussian(a.cols(), 4, seed);
        let got = matmul(&a, &b).unwrap();
        prop_assert!(got.max_abs_diff(&common::matmul(&a, &b)).unwrap() <= 1e-12);
    }

    #[test]
    fn self_tensor_dot_is_squared_dot(h in 1usize..=16, seed in any::<u64>()) {
        let x = common::gaussian(2, h, seed);
        let t = row_self_tensor(&x);
        prop_assert_eq!(t.row(0), &common::self_tensor(x.row(0))[..]);
        let want = common::dot(x.row(0), x.row(1)).powi(2);
        prop_assert!((common::dot(t.row(0), t.row(1)) - want).abs() <= 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn lt_mask_idempotent_and_zeroes_upper(a in (1usize..8).prop_flat_map(|n| small_matrix(n, n).prop_filter("square", |m| m.rows() == m.cols()))) {
        let once = lt_mask(&a).unwrap();
        prop_assert_eq!(lt_mask(&once).unwrap(), once.clone());
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                prop_assert_eq!(once.get(i, j), if j <= i { a.get(i, j) } else { 0.0 });
            }
        }
    }

    #[test]
    fn frobenius_triangle(seed in any::<u64>(), r in 1usize..6, c in 1usize..6) {
        let a = common::gaussian(r, c, seed);
        let b = common::gaussian(r, c, seed ^ 1);
        let d = common::gaussian(r, c, seed ^ 2);
        prop_assert_eq!(frobenius_norm(&a.sub(&a).unwrap()), 0.0);
        let ab = frobenius_norm(&a.sub(&b).unwrap());
        let bd = frobenius_norm(&b.sub(&d).unwrap());
        let ad = frobenius_norm(&a.sub(&d).unwrap());
        prop_assert!(ad <= ab + bd + 1e-9);
    }

    #[test]
    fn layer_norm_rows_are_centered(a in small_matrix(5, 9), var in any::<bool>()) {
        let h = a.cols();
        let out = layer_norm_rows(&a, &vec![1.0; h], &vec![0.0; h], var).unwrap();
        for row in out.row_iter() {
            prop_assert!((row.iter().sum::<f64>() / h as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn softmax_matches_unstabilized(seed in any::<u64>(), beta in 0.5f64..4.0) {
        let logits = common::gaussian(4, 7, seed).map(|x| (x * 6.0).clamp(-20.0, 20.0));
        let got = stable_softmax_rows(&logits, beta).unwrap();
        for i in 0..4 {
            let e: Vec<f64> = logits.row(i).iter().map(|x| (x / beta).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..7 {
                prop_assert!((got.get(i, j) - e[j] / z).abs() <= 1e-6);
            }
            prop_assert!((got.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn pskm_round_trips(a in small_matrix(6, 6)) {
        match decode_pskm(&pskm_bytes(&a)).unwrap() {
            AnyMatrix::F64(b) => prop_assert_eq!(b, a.clone()),
            AnyMatrix::F32(_) => prop_assert!(false, "dtype changed"),
        }
        let single = a.cast::<f32>();
        match decode_pskm(&pskm_bytes(&single)).unwrap() {
            AnyMatrix::F32(b) => prop_assert_eq!(b, single),
            AnyMatrix::F64(_) => prop_assert!(false, "dtype changed"),
        }
    }
}
