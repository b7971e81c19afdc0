mod common;

use acpd::accel::{apdhg_solve, SmoothSaddleProblem};
use acpd::driver::{SolveOptions, StopRule};
use acpd::estimators::*;
use acpd::linalg::{LinearMap, RealVector};
use acpd::oracles::SmoothOracle;
use acpd::pdhg::{self, SaddleProblem};
use acpd::problems::{generate, Family, ProblemSpec};
use acpd::scheduler::SchedulerConfig;
use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn local_op_norm_examples() {
    let a = LinearMap::diagonal(&[2.0, 3.0]).unwrap();
    assert_eq!(local_op_norm(&a, &v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap(), 2.0);
    let y = v(&[0.3, -0.7]);
    assert_eq!(local_op_norm(&a, &y, &y).unwrap(), 0.0);
}

#[test]
fn local_op_norm_matches_dense_computation() {
    let mut r = rng(31);
    for _ in 0..20 {
        let m = gauss_mat(&mut r, 5, 5);
        let a = dense(m.clone());
        let (y1, y0) = (gauss_vec(&mut r, 5), gauss_vec(&mut r, 5));
        let d = &y1 - &y0;
        let want = (m.transpose() * &d).norm() / d.norm();
        let got = local_op_norm(&a, &y1, &y0).unwrap();
        assert!((got - want).abs() <= 1e-14 * want.max(1.0));
    }
}

#[test]
fn seed_op_norm_examples() {
    let z = v(&[0.0, 0.0]);
    assert_eq!(seed_op_norm(&LinearMap::identity(2), &v(&[1.0, 0.0]), &z, &v(&[0.0, 1.0])).unwrap(), 1.0);
    let a = LinearMap::diagonal(&[2.0, 3.0]).unwrap();
    assert_eq!(seed_op_norm(&a, &z, &z, &v(&[0.0, 1.0])).unwrap(), 3.0);
    let mut r = rng(32);
    let m = gauss_mat(&mut r, 4, 3);
    let (yt, y0, probe) = (gauss_vec(&mut r, 4), gauss_vec(&mut r, 4), gauss_vec(&mut r, 4));
    let d = &yt - &y0;
    let want = (m.transpose() * &d).norm() / d.norm();
    assert!((seed_op_norm(&dense(m), &yt, &y0, &probe).unwrap() - want).abs() <= 1e-14 * want);
}

fn iso_quadratic(l: f64, n: usize) -> SmoothOracle {
    SmoothOracle::quadratic(DMatrix::identity(n, n) * l, RealVector::zeros(n)).unwrap()
}

#[test]
fn quadratics_are_estimated_exactly() {
    let f = iso_quadratic(4.0, 3);
    let mut r = rng(33);
    for _ in 0..10 {
        let (x1, x0) = (gauss_vec(&mut r, 3), gauss_vec(&mut r, 3));
        assert!((local_smooth_first(&f, &x1, &x0).unwrap() - 4.0).abs() <= 1e-14);
        assert!((local_smooth_bregman(&f, &x1, &x0).unwrap() - 4.0).abs() <= 1e-12);
    }
    let x = v(&[1.0, 2.0, 3.0]);
    assert_eq!(local_smooth_first(&f, &x, &x).unwrap(), 0.0);
    let lin = SmoothOracle::linear(v(&[1.0, -1.0, 2.0]));
    assert_eq!(local_smooth_bregman(&lin, &x, &v(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
}

#[test]
fn bregman_falls_back_to_secant_on_degenerate_denominator() {
    // f_old − f_new − ⟨g_new, x_old − x_new⟩ = 0 while the gradients differ
    let x_new = v(&[0.0]);
    let x_old = v(&[1.0]);
    let r = bregman_ratio(0.0, &v(&[1.0]), &x_new, 1.0, &v(&[3.0]), &x_old);
    assert_eq!(r, 2.0);
}

/// Mean logistic loss and gradient written out directly.
fn logistic_direct(feats: &DMatrix<f64>, labels: &RealVector, x: &RealVector) -> (f64, RealVector) {
    let n = feats.nrows() as f64;
    let mut val = 0.0;
    let mut grad = RealVector::zeros(x.len());
    for i in 0..feats.nrows() {
        let row = feats.row(i).transpose();
        let z = -labels[i] * row.dot(x);
        val += (1.0 + z.exp()).ln();
        grad += row * (-labels[i] / (1.0 + (-z).exp()));
    }
    (val / n, grad / n)
}

#[test]
fn logistic_estimates_match_the_definitions() {
    let mut r = rng(34);
    for _ in 0..10 {
        let feats = gauss_mat(&mut r, 6, 3);
        let labels = RealVector::from_fn(6, |_, _| if r.gen_bool(0.5) { 1.0 } else { -1.0 });
        let f = SmoothOracle::logistic(feats.clone(), labels.clone()).unwrap();
        let (x1, x0) = (gauss_vec(&mut r, 3), gauss_vec(&mut r, 3));
        let (f1, g1) = logistic_direct(&feats, &labels, &x1);
        let (f0, g0) = logistic_direct(&feats, &labels, &x0);
        let secant = (&g1 - &g0).norm() / (&x1 - &x0).norm();
        assert!((local_smooth_first(&f, &x1, &x0).unwrap() - secant).abs() <= 1e-14 * secant.max(1.0));
        let breg = (&g1 - &g0).norm_squared() / (2.0 * (f0 - f1 - g1.dot(&(&x0 - &x1))));
        let got = local_smooth_bregman(&f, &x1, &x0).unwrap();
        assert!((got - breg).abs() <= 1e-12 * breg, "{got} vs {breg}");
    }
}

#[test]
fn op_estimates_stay_below_the_spectral_norm_during_runs() {
    for seed in 0..4 {
        let g = generate(&ProblemSpec::new(Family::ConstrainedQp, 10, 5, seed)).unwrap();
        let p = g.instance.as_saddle().unwrap();
        let norm = svd_norm(&p.a().to_dense());
        let rep = pdhg::solve(p, &SchedulerConfig::new(0.1), StopRule::MaxIters(300), &SolveOptions::default()).unwrap();
        let h = &rep.steps;
        assert!(h.l_op.iter().all(|l| *l <= norm + 1e-8));
    }
    let g = generate(&ProblemSpec::new(Family::BoxBilinear, 6, 4, 7)).unwrap();
    let p: &SaddleProblem = g.instance.as_saddle().unwrap();
    let norm = svd_norm(&p.a().to_dense());
    let rep = pdhg::solve(p, &SchedulerConfig::new(1.0), StopRule::MaxIters(300), &SolveOptions::default()).unwrap();
    assert!(rep.steps.l_op.iter().all(|l| *l <= norm + 1e-8));
}

#[test]
fn smooth_estimates_stay_below_the_top_eigenvalue() {
    for seed in 0..3 {
        let g = generate(&ProblemSpec::new(Family::SmoothConstrained, 6, 3, seed)).unwrap();
        let p: &SmoothSaddleProblem = g.instance.as_smooth_saddle().unwrap();
        let SmoothOracle::Quadratic { p: hess, .. } = p.f() else { panic!("quadratic f expected") };
        let lmax = SymmetricEigen::new(hess.clone()).eigenvalues.max();
        let rep = apdhg_solve(p, &SchedulerConfig::new(0.1), StopRule::MaxIters(300), &SolveOptions::default()).unwrap();
        let h = &rep.steps;
        assert!(h.l_smooth.iter().all(|l| *l >= 0.0 && *l <= lmax + 1e-8), "lmax {lmax}");
        assert!(h.l_smooth.iter().any(|l| *l > 0.0));
    }
}

#[test]
fn running_max_is_monotone_and_above_the_seed() {
    let mut r = rng(35);
    let mut hist = CurvatureHistory::new(0.5, 0.1, 2.0);
    for t in 1..=200 {
        hist.push(r.gen_range(0.0..3.0), if t % 3 == 0 { r.gen_range(0.0..2.0) } else { 0.0 });
        assert!(hist.combined_max(t) >= hist.combined_max(t - 1));
        assert!(hist.op_running_max(t) >= hist.seed_term());
        assert!(hist.combined_max(t) >= hist.seed_floor());
    }
    assert_eq!(hist.seed_floor(), 1.0 / (4.0 * 0.9 * 2.0));
    assert_eq!(hist.seed_term(), (0.5 * hist.seed_floor()).sqrt());
}

#[test]
fn op_running_max_without_smooth_part() {
    let mut hist = CurvatureHistory::new(1.0, 0.1, 1.0);
    for l in [0.1, 2.0, 1.0] {
        hist.push(l, 0.0);
    }
    assert_eq!(hist.op_running_max(1), hist.seed_term());
    assert_eq!(hist.op_running_max(3), 2.0);
    assert_eq!(hist.combined_max(3), 4.0);
}

proptest! {
    #[test]
    fn local_op_norm_is_bounded_by_the_operator_norm(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let m = gauss_mat(&mut r, 4, 3);
        let norm = svd_norm(&m);
        let l = local_op_norm(&dense(m), &gauss_vec(&mut r, 4), &gauss_vec(&mut r, 4)).unwrap();
        prop_assert!(l >= 0.0 && l <= norm * (1.0 + 1e-12));
    }

    #[test]
    fn free_box_quadratic_estimates_stay_in_the_spectrum(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let m = gauss_mat(&mut r, 3, 3);
        let hess = m.tr_mul(&m);
        let eig = SymmetricEigen::new(hess.clone()).eigenvalues;
        let f = SmoothOracle::quadratic(hess, gauss_vec(&mut r, 3)).unwrap();
        let (x1, x0) = (gauss_vec(&mut r, 3), gauss_vec(&mut r, 3));
        let s = local_smooth_first(&f, &x1, &x0).unwrap();
        let b = local_smooth_bregman(&f, &x1, &x0).unwrap();
        prop_assert!(s <= eig.max() * (1.0 + 1e-10) + 1e-12);
        prop_assert!(b <= eig.max() * (1.0 + 1e-8) + 1e-12);
    }
}

#[test]
fn quadratic_divergence_survives_cancellation() {
    let mut r = rng(48);
    let m = gauss_mat(&mut r, 3, 3);
    let p = m.tr_mul(&m) + DMatrix::identity(3, 3) * 0.1;
    let lmax = nalgebra::SymmetricEigen::new(p.clone()).eigenvalues.max();
    let f = SmoothOracle::quadratic(p, gauss_vec(&mut r, 3)).unwrap();
    // far from the minimizer with a tiny step the value difference is mostly rounding
    let x_old = gauss_vec(&mut r, 3) * 1e4;
    let x_new = &x_old + gauss_vec(&mut r, 3) * 1e-6;
    let (f_new, g_new) = f.gradient(&x_new).unwrap();
    let (f_old, g_old) = f.gradient(&x_old).unwrap();
    let got = smooth_ratio(&f, f_new, &g_new, &x_new, f_old, &g_old, &x_old);
    assert!(got <= lmax * (1.0 + 1e-9) && got >= 0.1, "{got} vs {lmax}");
    assert!(local_smooth_bregman(&f, &x_new, &x_old).unwrap() <= lmax * (1.0 + 1e-9));
}
