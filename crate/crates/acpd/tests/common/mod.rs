#![allow(dead_code)]

use acpd::linalg::{LinearMap, RealVector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> RealVector {
    RealVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn unif_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> RealVector {
    RealVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

pub fn dense(m: DMatrix<f64>) -> LinearMap {
    LinearMap::dense(m).unwrap()
}

pub fn v(xs: &[f64]) -> RealVector {
    RealVector::from_column_slice(xs)
}

/// Largest singular value from a dense SVD.
pub fn svd_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Minimizes `h` on a uniform grid over `[lo, hi]^dim` (dim ≤ 2) with spacing `step`.
pub fn grid_min(lo: &[f64], hi: &[f64], step: f64, h: impl Fn(&RealVector) -> f64) -> RealVector {
    let n = lo.len();
    assert!(n == 1 || n == 2);
    let counts: Vec<usize> = (0..n).map(|i| ((hi[i] - lo[i]) / step).round() as usize + 1).collect();
    let mut best = (f64::INFINITY, RealVector::zeros(n));
    let total: usize = counts.iter().product();
    let mut x = RealVector::zeros(n);
    for idx in 0..total {
        let mut r = idx;
        for i in 0..n {
            x[i] = (lo[i] + step * (r % counts[i]) as f64).min(hi[i]);
            r /= counts[i];
        }
        let val = h(&x);
        if val < best.0 {
            best = (val, x.clone());
        }
    }
    best.1
}

/// Minimizes a convex `h` over the box `[lo, hi]` (dim ≤ 2) by successive
/// grids: 201 points per coordinate, each level zooming to ±2 cells around
/// the best point, until the spacing is at most `final_step`.
pub fn refined_grid_min(lo: &[f64], hi: &[f64], final_step: f64, h: impl Fn(&RealVector) -> f64) -> RealVector {
    let n = lo.len();
    let mut lo = lo.to_vec();
    let mut hi = hi.to_vec();
    loop {
        let step = (0..n).map(|i| (hi[i] - lo[i]) / 200.0).fold(0.0, f64::max);
        let best = grid_min(&lo, &hi, step.max(f64::MIN_POSITIVE), &h);
        if step <= final_step {
            return best;
        }
        for i in 0..n {
            let (l0, h0) = (lo[i], hi[i]);
            lo[i] = (best[i] - 2.0 * step).max(l0);
            hi[i] = (best[i] + 2.0 * step).min(h0);
        }
    }
}
