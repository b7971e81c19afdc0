mod common;

use acpd::linalg::{BoxSet, LinearMap, RealVector};
use acpd::oracles::{dual_prox, AugmentedOracle, ProxOracle, SmoothOracle};
use acpd::Error;
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn prox_examples() {
    let free = ProxOracle::zero(BoxSet::free(2));
    let got = free.prox(&v(&[1.0, 1.0]), &v(&[0.0, 0.0]), 0.5).unwrap();
    assert_eq!(got, v(&[-0.5, -0.5]));
    let boxed = ProxOracle::zero(BoxSet::uniform(2, 0.0, 1.0).unwrap());
    assert_eq!(boxed.prox(&v(&[1.0, 1.0]), &v(&[0.0, 0.0]), 0.5).unwrap(), v(&[0.0, 0.0]));
    let l1 = ProxOracle::l1(1.0, BoxSet::free(1)).unwrap();
    let st = l1.prox(&v(&[0.0]), &v(&[1.4]), 0.25).unwrap()[0];
    assert!((st - 1.15).abs() < 1e-15);
}

#[test]
fn soft_threshold_matches_fine_grid() {
    // η(λ|x|) + ½(1.4 − x)² on a 1e-6 grid
    let h = |x: &RealVector| 0.25 * x[0].abs() + 0.5 * (1.4 - x[0]).powi(2);
    let g = refined_grid_min(&[-3.0], &[3.0], 1e-6, h);
    assert!((g[0] - 1.15).abs() <= 2e-6);
}

#[test]
fn unsupported_quadratic_matrix_errors() {
    let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let e = ProxOracle::quadratic_matrix(&p, v(&[0.0, 0.0]), BoxSet::free(2)).unwrap_err();
    assert!(matches!(e, Error::OracleUnavailable(_)));
    let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
    assert!(ProxOracle::quadratic_matrix(&d, v(&[0.0, 0.0]), BoxSet::free(2)).is_ok());
}

fn random_prox(r: &mut rand_chacha::ChaCha8Rng, n: usize, lo: f64, hi: f64) -> (ProxOracle, &'static str) {
    let dom = BoxSet::uniform(n, lo, hi).unwrap();
    match r.gen_range(0..4) {
        0 => (ProxOracle::zero(dom), "zero"),
        1 => (ProxOracle::linear(gauss_vec(r, n), dom).unwrap(), "linear"),
        2 => (ProxOracle::l1(r.gen_range(0.1..2.0), dom).unwrap(), "l1"),
        _ => (ProxOracle::quadratic(unif_vec(r, n, 0.0, 3.0), gauss_vec(r, n), dom).unwrap(), "quadratic"),
    }
}

#[test]
fn prox_matches_grid_brute_force_in_two_dims() {
    let mut r = rng(21);
    for trial in 0..12 {
        let (h, kind) = random_prox(&mut r, 2, -1.5, 1.5);
        let lin = gauss_vec(&mut r, 2);
        let center = gauss_vec(&mut r, 2);
        let eta = r.gen_range(0.1..2.0);
        let got = h.prox(&lin, &center, eta).unwrap();
        let obj = |x: &RealVector| eta * (lin.dot(x) + h.value(x).unwrap()) + 0.5 * (&center - x).norm_squared();
        let g = refined_grid_min(&[-1.5, -1.5], &[1.5, 1.5], 1e-6, obj);
        assert!((&got - &g).amax() <= 1e-5, "trial {trial} ({kind}): {got} vs {g}");
    }
}

#[test]
fn dual_prox_closed_forms() {
    let anchor = v(&[0.0, 0.0]);
    let g = ProxOracle::linear(v(&[0.0, 0.0]), BoxSet::free(2)).unwrap();
    let y = dual_prox(&g, &v(&[-1.0, 0.0]), &anchor, 1.0, 0.0, &anchor).unwrap();
    assert_eq!(y, v(&[1.0, 0.0]));
    let zero = ProxOracle::zero(BoxSet::free(2));
    let a2 = v(&[0.3, -2.0]);
    assert_eq!(dual_prox(&zero, &v(&[0.0, 0.0]), &a2, 0.7, 0.0, &anchor).unwrap(), a2);
    // y = center − (minus_ax + b)/(μ+τ)
    let b = v(&[0.5, -1.0]);
    let gl = ProxOracle::linear(b.clone(), BoxSet::free(2)).unwrap();
    let (mu, tau) = (0.5, 2.0);
    let yp = v(&[1.0, 1.0]);
    let mx = v(&[0.2, 0.1]);
    let got = dual_prox(&gl, &mx, &a2, mu, tau, &yp).unwrap();
    let center = (&a2 * mu + &yp * tau) / (mu + tau);
    let want = center - (&mx + &b) / (mu + tau);
    assert!((got - want).amax() <= 1e-15);
    assert!(matches!(dual_prox(&gl, &mx, &a2, 0.0, tau, &yp), Err(Error::InvalidConfig(_))));
}

#[test]
fn dual_prox_matches_two_term_grid_minimization() {
    let mut r = rng(22);
    for trial in 0..12 {
        let (g, kind) = if trial < 6 {
            (ProxOracle::indicator(BoxSet::uniform(2, -1.0, 1.0).unwrap()), "indicator")
        } else {
            random_prox(&mut r, 2, -1.0, 1.0)
        };
        let mx = gauss_vec(&mut r, 2);
        let anchor = unif_vec(&mut r, 2, -1.0, 1.0);
        let yp = unif_vec(&mut r, 2, -1.0, 1.0);
        let mu = r.gen_range(0.1..2.0);
        let tau = if trial % 2 == 0 { 0.0 } else { r.gen_range(0.0..3.0) };
        let got = dual_prox(&g, &mx, &anchor, mu, tau, &yp).unwrap();
        let obj = |y: &RealVector| {
            mx.dot(y) + g.value(y).unwrap() + 0.5 * mu * (&anchor - y).norm_squared() + 0.5 * tau * (&yp - y).norm_squared()
        };
        let gm = refined_grid_min(&[-1.0, -1.0], &[1.0, 1.0], 1e-6, obj);
        assert!((&got - &gm).amax() <= 1e-5, "trial {trial} ({kind})");
    }
}

#[test]
fn gradient_examples() {
    let f = SmoothOracle::quadratic(DMatrix::identity(2, 2), v(&[0.0, 0.0])).unwrap();
    let (val, grad) = f.gradient(&v(&[3.0, 4.0])).unwrap();
    assert_eq!(val, 12.5);
    assert_eq!(grad, v(&[3.0, 4.0]));
    let q = SmoothOracle::quadratic(DMatrix::from_diagonal(&v(&[1.0, 2.0])), v(&[1.0, 0.0])).unwrap();
    assert_eq!(q.gradient(&v(&[1.0, 1.0])).unwrap().1, v(&[2.0, 2.0]));
}

fn central_diff(f: &SmoothOracle, x: &RealVector, h: f64) -> RealVector {
    RealVector::from_fn(x.len(), |i, _| {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += h;
        m[i] -= h;
        (f.value(&p).unwrap() - f.value(&m).unwrap()) / (2.0 * h)
    })
}

fn logistic(r: &mut rand_chacha::ChaCha8Rng, samples: usize, n: usize) -> SmoothOracle {
    let feats = gauss_mat(r, samples, n);
    let labels = RealVector::from_fn(samples, |_, _| if r.gen_bool(0.5) { 1.0 } else { -1.0 });
    SmoothOracle::logistic(feats, labels).unwrap()
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let mut r = rng(23);
    for _ in 0..10 {
        let f = logistic(&mut r, 5, 3);
        let x = gauss_vec(&mut r, 3);
        let g = f.gradient(&x).unwrap().1;
        let fd = central_diff(&f, &x, 1e-6);
        assert!((&g - &fd).norm() <= 1e-5 * g.norm().max(1e-3), "{g} vs {fd}");
    }
}

#[test]
fn quadratic_gradient_matches_central_differences() {
    let mut r = rng(24);
    for _ in 0..10 {
        let m = gauss_mat(&mut r, 4, 4);
        let f = SmoothOracle::quadratic(m.tr_mul(&m), gauss_vec(&mut r, 4)).unwrap();
        let x = gauss_vec(&mut r, 4);
        let g = f.gradient(&x).unwrap().1;
        let fd = central_diff(&f, &x, 1e-6);
        assert!((&g - &fd).norm() <= 1e-5 * g.norm().max(1e-3));
    }
}

#[test]
fn augmented_solve_examples() {
    let t = v(&[0.7, -2.0]);
    let plain = AugmentedOracle::new(ProxOracle::zero(BoxSet::free(2)), LinearMap::identity(2)).unwrap();
    assert!((plain.solve(0.3, &t).unwrap() - &t).amax() <= 1e-15);
    let l1 = AugmentedOracle::new(ProxOracle::l1(0.5, BoxSet::free(2)).unwrap(), LinearMap::identity(2)).unwrap();
    // soft-threshold by λρ = 0.5·0.4
    let w = l1.solve(0.4, &t).unwrap();
    assert!((w - v(&[0.5, -1.8])).amax() <= 1e-15);
    let two = AugmentedOracle::new(
        ProxOracle::zero(BoxSet::free(2)),
        LinearMap::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]).unwrap(),
    )
    .unwrap();
    assert!((two.solve(1.0, &t).unwrap() - &t / 2.0).amax() <= 1e-14);
    let bad = AugmentedOracle::new(ProxOracle::zero(BoxSet::free(2)), LinearMap::from_row_slice(1, 2, &[1.0, 1.0]).unwrap());
    assert!(matches!(bad, Err(Error::OracleUnavailable(_))));
}

#[test]
fn augmented_solve_soft_threshold_matches_fine_grid() {
    let oracle = AugmentedOracle::new(ProxOracle::l1(1.0, BoxSet::free(1)).unwrap(), LinearMap::identity(1)).unwrap();
    let w = oracle.solve(0.25, &v(&[1.4])).unwrap();
    let obj = |x: &RealVector| x[0].abs() + 2.0 * (x[0] - 1.4).powi(2);
    let g = refined_grid_min(&[-3.0], &[3.0], 1e-6, obj);
    assert!((w[0] - g[0]).abs() <= 2e-6);
}

#[test]
fn augmented_solve_matches_grid_for_each_strategy() {
    let mut r = rng(25);
    for trial in 0..12 {
        let bm = gauss_mat(&mut r, 2, 2) + DMatrix::identity(2, 2) * 0.5;
        let (g, dom_lo, dom_hi) = match trial % 3 {
            0 => (ProxOracle::quadratic(unif_vec(&mut r, 2, 0.5, 2.0), gauss_vec(&mut r, 2), BoxSet::free(2)).unwrap(), -20.0, 20.0),
            1 => (ProxOracle::l1(0.3, BoxSet::free(2)).unwrap(), -20.0, 20.0),
            _ => (ProxOracle::indicator(BoxSet::uniform(2, -0.5, 0.5).unwrap()), -0.5, 0.5),
        };
        let b = if trial % 4 == 3 { LinearMap::identity(2).scaled(1.5) } else { dense(bm) };
        let oracle = AugmentedOracle::new(g.clone(), b.clone()).unwrap();
        let t = gauss_vec(&mut r, 2);
        let rho = r.gen_range(0.2..2.0);
        let w = oracle.solve(rho, &t).unwrap();
        let obj = |x: &RealVector| g.value(x).unwrap() + (b.forward(x).unwrap() - &t).norm_squared() / (2.0 * rho);
        let gm = refined_grid_min(&[dom_lo; 2], &[dom_hi; 2], 1e-6, obj);
        assert!((&w - &gm).amax() <= 1e-5, "trial {trial} ({}): {w} vs {gm}", oracle.strategy_name());
        assert!(oracle.residual(&w, rho, &t).unwrap() <= 1e-10);
    }
}

#[test]
fn augmented_solve_is_stationary_for_smooth_g() {
    let mut r = rng(26);
    for _ in 0..10 {
        let bm = gauss_mat(&mut r, 4, 3);
        let d = unif_vec(&mut r, 3, 0.1, 2.0);
        let lin = gauss_vec(&mut r, 3);
        let oracle = AugmentedOracle::new(ProxOracle::quadratic(d.clone(), lin.clone(), BoxSet::free(3)).unwrap(), dense(bm.clone())).unwrap();
        let t = gauss_vec(&mut r, 4) * 5.0;
        let rho = r.gen_range(0.01..3.0);
        let w = oracle.solve(rho, &t).unwrap();
        let grad = d.component_mul(&w) + &lin + bm.tr_mul(&(&bm * &w - &t)) / rho;
        assert!(grad.norm() <= 1e-8 * (1.0 + t.norm()), "{}", grad.norm());
    }
}

proptest! {
    #[test]
    fn zero_prox_on_free_domain_is_exact_gradient_step(seed in 0u64..10_000, eta in 0.01f64..10.0) {
        let mut r = rng(seed);
        let xi = gauss_vec(&mut r, 3);
        let c = gauss_vec(&mut r, 3);
        let got = ProxOracle::zero(BoxSet::free(3)).prox(&xi, &c, eta).unwrap();
        prop_assert_eq!(got, &c - &xi * eta);
    }

    #[test]
    fn prox_is_nonexpansive_in_the_center(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (h, _) = random_prox(&mut r, 3, -1.0, 1.0);
        let xi = gauss_vec(&mut r, 3);
        let c1 = gauss_vec(&mut r, 3) * 2.0;
        let c2 = gauss_vec(&mut r, 3) * 2.0;
        let eta = r.gen_range(0.05..3.0);
        let p1 = h.prox(&xi, &c1, eta).unwrap();
        let p2 = h.prox(&xi, &c2, eta).unwrap();
        prop_assert!((&p1 - &p2).norm() <= (&c1 - &c2).norm() + 1e-12);
        prop_assert!(h.domain().contains(&p1, 0.0));
    }

    #[test]
    fn smooth_oracles_satisfy_the_convexity_witness(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let f = logistic(&mut r, 6, 3);
        let x = gauss_vec(&mut r, 3);
        let y = gauss_vec(&mut r, 3);
        let (fx, gx) = f.gradient(&x).unwrap();
        prop_assert!(f.value(&y).unwrap() >= fx + gx.dot(&(&y - &x)) - 1e-10);
    }
}
