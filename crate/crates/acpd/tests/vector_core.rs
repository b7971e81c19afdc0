mod common;

use acpd::linalg::{load_dense_csv, load_triplets_csv, spectral_norm_reference, BoxSet, LinearMap, RealVector};
use acpd::Error;
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::io::Write;

#[test]
fn identity_and_diagonal_examples() {
    let id = LinearMap::identity(2);
    assert_eq!(id.forward(&v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
    assert_eq!(id.adjoint(&v(&[3.0, 4.0])).unwrap(), v(&[3.0, 4.0]));
    let d = LinearMap::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]).unwrap();
    assert_eq!(d.forward(&v(&[1.0, 0.0])).unwrap(), v(&[2.0, 0.0]));
    assert_eq!(d.adjoint(&v(&[0.0, 1.0])).unwrap(), v(&[0.0, 3.0]));
}

#[test]
fn dimension_mismatch_is_an_error() {
    let a = LinearMap::from_row_slice(2, 3, &[1.0; 6]).unwrap();
    assert!(matches!(a.forward(&v(&[1.0, 2.0])), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(a.adjoint(&v(&[1.0, 2.0, 3.0])), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn forward_matches_row_by_row_dot_products() {
    let mut r = rng(11);
    let m = gauss_mat(&mut r, 5, 4);
    let x = gauss_vec(&mut r, 4);
    let got = dense(m.clone()).forward(&x).unwrap();
    for i in 0..5 {
        let mut s = 0.0;
        for j in 0..4 {
            s += m[(i, j)] * x[j];
        }
        assert!((got[i] - s).abs() <= 1e-14, "row {i}");
    }
}

#[test]
fn sparse_triplets_sum_duplicates() {
    let s = LinearMap::sparse(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0), (1, 1, 4.0)]).unwrap();
    assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[3.0, 0.0, -1.0, 4.0]));
    assert!(LinearMap::sparse(2, 2, vec![(2, 0, 1.0)]).is_err());
}

fn kinds(r: &mut rand_chacha::ChaCha8Rng, m: usize, n: usize) -> Vec<(&'static str, LinearMap)> {
    let a = gauss_mat(r, m, n);
    let b = gauss_mat(r, n, n);
    let mut trip = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if (i + 2 * j) % 3 == 0 {
                trip.push((i, j, a[(i, j)]));
            }
        }
    }
    trip.push((0, 0, 0.5));
    vec![
        ("dense", dense(a.clone())),
        ("sparse", LinearMap::sparse(m, n, trip).unwrap()),
        ("scaled", dense(a.clone()).scaled(-2.5)),
        ("composed", dense(a).compose(dense(b)).unwrap().scaled(0.3)),
    ]
}

#[test]
fn adjoint_consistency_on_random_probes_per_kind() {
    let mut r = rng(5);
    for (name, op) in kinds(&mut r, 6, 3) {
        for _ in 0..100 {
            let x = gauss_vec(&mut r, 3);
            let y = gauss_vec(&mut r, 6);
            let lhs = op.forward(&x).unwrap().dot(&y);
            let rhs = x.dot(&op.adjoint(&y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + x.norm() * y.norm()), "{name}");
        }
    }
}

#[test]
fn scaled_composition_is_scalar_times_nested_forward() {
    let mut r = rng(8);
    let a = gauss_mat(&mut r, 4, 3);
    let b = gauss_mat(&mut r, 3, 5);
    let op = dense(a.clone()).compose(dense(b.clone())).unwrap().scaled(1.7);
    for _ in 0..20 {
        let x = gauss_vec(&mut r, 5);
        let direct = (&a * (&b * &x)) * 1.7;
        assert!((op.forward(&x).unwrap() - direct).amax() <= 1e-14 * (1.0 + x.norm() * 10.0));
    }
}

#[test]
fn spectral_norm_examples() {
    let d = LinearMap::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]).unwrap();
    assert!((spectral_norm_reference(&d, 50).unwrap() - 3.0).abs() <= 1e-8);
    assert!((spectral_norm_reference(&LinearMap::identity(7), 10).unwrap() - 1.0).abs() <= 1e-12);
    assert_eq!(spectral_norm_reference(&LinearMap::zero(3, 2), 10).unwrap(), 0.0);
    let mut r = rng(3);
    let m = gauss_mat(&mut r, 8, 8);
    let est = spectral_norm_reference(&dense(m.clone()), 2000).unwrap();
    assert!((est - svd_norm(&m)).abs() <= 1e-6 * svd_norm(&m), "{est} vs {}", svd_norm(&m));
}

#[test]
fn spectral_norm_is_monotone_in_iterations() {
    let mut r = rng(4);
    let op = dense(gauss_mat(&mut r, 6, 9));
    let mut prev = 0.0;
    for it in [1, 2, 5, 10, 50, 200] {
        let e = spectral_norm_reference(&op, it).unwrap();
        assert!(e >= prev, "{it}: {e} < {prev}");
        prev = e;
    }
}

#[test]
fn box_diameter_and_projection() {
    let b = BoxSet::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
    assert!((b.diameter().unwrap() - 8f64.sqrt()).abs() < 1e-15);
    assert_eq!(b.project(&v(&[3.0, -1.0])), v(&[1.0, 0.0]));
    assert!(BoxSet::free(2).diameter().is_none());
    assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
}

#[test]
fn csv_loading_dense_and_triplets() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "1,2,3\n4,5,6").unwrap();
    let a = load_dense_csv(f.path()).unwrap();
    assert_eq!(a.to_dense(), DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let mut t = tempfile::NamedTempFile::new().unwrap();
    writeln!(t, "0,1,2.5\n1,0,-1\n0,1,0.5").unwrap();
    let s = load_triplets_csv(t.path(), Some((2, 2))).unwrap();
    assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -1.0, 0.0]));
}

proptest! {
    #[test]
    fn adjoint_identity_holds_for_random_dense_maps(
        m in 1usize..7, n in 1usize..7, seed in 0u64..10_000,
    ) {
        let mut r = rng(seed);
        let op = dense(gauss_mat(&mut r, m, n));
        let x: RealVector = gauss_vec(&mut r, n);
        let y: RealVector = gauss_vec(&mut r, m);
        let lhs = op.forward(&x).unwrap().dot(&y);
        let rhs = x.dot(&op.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + x.norm() * y.norm()));
    }
}
