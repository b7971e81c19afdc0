//! Local curvature estimates built from successive iterates.

use crate::error::Result;
use crate::linalg::{LinearMap, RealVector};
use crate::oracles::SmoothOracle;

/// Differences smaller than this in norm count as zero.
const TINY_DIFF: f64 = 1e-150;

/// Relative threshold on the Bregman denominator below which the secant ratio is used.
const BREGMAN_CLAMP: f64 = 1e-14;

/// `‖Aᵀ(y_new − y_old)‖ / ‖y_new − y_old‖`, with `0/0 = 0`.
pub fn local_op_norm(a: &LinearMap, y_new: &RealVector, y_old: &RealVector) -> Result<f64> {
    let diff = y_new - y_old;
    let nd = diff.norm();
    if nd <= TINY_DIFF {
        return Ok(0.0);
    }
    Ok(a.adjoint(&diff)?.norm() / nd)
}

/// Seed estimate for the first stepsize.
///
/// Uses the difference between the dual anchor and the initial dual point; when those
/// coincide, falls back to `‖Aᵀu‖` for the unit direction of `fallback_probe`.
pub fn seed_op_norm(
    a: &LinearMap,
    y_tilde0: &RealVector,
    y0: &RealVector,
    fallback_probe: &RealVector,
) -> Result<f64> {
    let diff = y_tilde0 - y0;
    if diff.norm() > TINY_DIFF {
        return local_op_norm(a, y_tilde0, y0);
    }
    let np = fallback_probe.norm();
    if np <= TINY_DIFF {
        return Ok(0.0);
    }
    Ok(a.adjoint(&(fallback_probe / np))?.norm())
}

/// Secant ratio `‖g1 − g0‖ / ‖x1 − x0‖` from precomputed gradients.
pub fn secant_ratio(g1: &RealVector, g0: &RealVector, x1: &RealVector, x0: &RealVector) -> f64 {
    let dx = (x1 - x0).norm();
    if dx <= TINY_DIFF {
        return 0.0;
    }
    (g1 - g0).norm() / dx
}

/// Bregman-form smoothness estimate from precomputed values and gradients.
///
/// `‖g_new − g_old‖² / (2[f_old − f_new − ⟨g_new, x_old − x_new⟩])`
pub fn bregman_ratio(
    f_new: f64,
    g_new: &RealVector,
    x_new: &RealVector,
    f_old: f64,
    g_old: &RealVector,
    x_old: &RealVector,
) -> f64 {
    let dg = g_new - g_old;
    let num = dg.norm_squared();
    if num == 0.0 {
        return 0.0;
    }
    let dx = x_old - x_new;
    let denom = 2.0 * (f_old - f_new - g_new.dot(&dx));
    if denom <= BREGMAN_CLAMP * dx.norm_squared() {
        return secant_ratio(g_new, g_old, x_new, x_old);
    }
    num / denom
}

/// [`bregman_ratio`] with the divergence of a quadratic taken in closed form,
/// `2D = ΔᵀPΔ`. The value difference cancels once steps are small relative to
/// `|f|`, which would inflate the ratio past `λ_max(P)`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_ratio(
    f: &SmoothOracle,
    f_new: f64,
    g_new: &RealVector,
    x_new: &RealVector,
    f_old: f64,
    g_old: &RealVector,
    x_old: &RealVector,
) -> f64 {
    let SmoothOracle::Quadratic { p, .. } = f else {
        return bregman_ratio(f_new, g_new, x_new, f_old, g_old, x_old);
    };
    let dg = g_new - g_old;
    let num = dg.norm_squared();
    if num == 0.0 {
        return 0.0;
    }
    let dx = x_old - x_new;
    let denom = dx.dot(&(p * &dx));
    if denom <= BREGMAN_CLAMP * dx.norm_squared() {
        return secant_ratio(g_new, g_old, x_new, x_old);
    }
    num / denom
}

/// Secant estimate of the gradient Lipschitz constant between two points.
pub fn local_smooth_first(f: &SmoothOracle, x1: &RealVector, x0: &RealVector) -> Result<f64> {
    if (x1 - x0).norm() <= TINY_DIFF {
        return Ok(0.0);
    }
    let (_, g1) = f.gradient(x1)?;
    let (_, g0) = f.gradient(x0)?;
    Ok(secant_ratio(&g1, &g0, x1, x0))
}

/// Bregman estimate of the gradient Lipschitz constant between two points.
pub fn local_smooth_bregman(f: &SmoothOracle, x_new: &RealVector, x_old: &RealVector) -> Result<f64> {
    let (f_new, g_new) = f.gradient(x_new)?;
    let (f_old, g_old) = f.gradient(x_old)?;
    Ok(smooth_ratio(f, f_new, &g_new, x_new, f_old, &g_old, x_old))
}

/// Per-run record of the curvature estimates.
///
/// The combined curvature of iteration `t` is `C_t = L_t²/μ + Lf_t` (with `Lf = 0`
/// for non-smooth variants); `running_max` is `max{seed, C_1, ..., C_t}` where the
/// seed floor is `1/(4(1−β)η₁)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureHistory {
    mu: f64,
    seed_floor: f64,
    op: Vec<f64>,
    smooth: Vec<f64>,
    running_max: Vec<f64>,
}

impl CurvatureHistory {
    pub fn new(mu: f64, beta: f64, eta1: f64) -> Self {
        Self {
            mu,
            seed_floor: 1.0 / (4.0 * (1.0 - beta) * eta1),
            op: Vec::new(),
            smooth: Vec::new(),
            running_max: Vec::new(),
        }
    }

    /// Records `(L_t, Lf_t)` for the next iteration.
    pub fn push(&mut self, l_op: f64, l_smooth: f64) {
        let c = l_op * l_op / self.mu + l_smooth;
        let prev = self.running_max.last().copied().unwrap_or(self.seed_floor);
        self.op.push(l_op);
        self.smooth.push(l_smooth);
        self.running_max.push(prev.max(c));
    }

    pub fn len(&self) -> usize {
        self.op.len()
    }

    pub fn is_empty(&self) -> bool {
        self.op.is_empty()
    }

    pub fn op_estimates(&self) -> &[f64] {
        &self.op
    }

    pub fn smooth_estimates(&self) -> &[f64] {
        &self.smooth
    }

    pub fn latest_op(&self) -> Option<f64> {
        self.op.last().copied()
    }

    pub fn latest_smooth(&self) -> Option<f64> {
        self.smooth.last().copied()
    }

    /// `1/(4(1−β)η₁)`
    pub fn seed_floor(&self) -> f64 {
        self.seed_floor
    }

    /// `√(μ/(4(1−β)η₁))`: floor of the operator-norm running max.
    pub fn seed_term(&self) -> f64 {
        (self.mu * self.seed_floor).sqrt()
    }

    /// Combined running max `Ĉ_t` after iteration `t` (`t = 0` gives the seed floor).
    pub fn combined_max(&self, t: usize) -> f64 {
        if t == 0 {
            self.seed_floor
        } else {
            self.running_max[t - 1]
        }
    }

    /// Operator-norm running max `L̂_t = √(μ Ĉ_t)`; for non-smooth runs this is
    /// `max{seed_term, L_1, ..., L_t}`.
    pub fn op_running_max(&self, t: usize) -> f64 {
        if t == 0 {
            return self.seed_term();
        }
        let m = self.op[..t].iter().fold(self.seed_term(), |a, &b| a.max(b));
        if self.smooth[..t].iter().all(|s| *s == 0.0) {
            m
        } else {
            (self.mu * self.combined_max(t)).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn v(x: &[f64]) -> RealVector {
        RealVector::from_column_slice(x)
    }

    #[test]
    fn op_norm_cases() {
        let a = LinearMap::diagonal(&[2.0, 3.0]).unwrap();
        assert_eq!(local_op_norm(&a, &v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap(), 2.0);
        assert_eq!(local_op_norm(&a, &v(&[1.0, 1.0]), &v(&[1.0, 1.0])).unwrap(), 0.0);
        let id = LinearMap::identity(2);
        assert_eq!(seed_op_norm(&id, &v(&[1.0, 0.0]), &v(&[0.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(seed_op_norm(&a, &v(&[0.5, 0.5]), &v(&[0.5, 0.5]), &v(&[0.0, 1.0])).unwrap(), 3.0);
    }

    #[test]
    fn smooth_estimates_on_isotropic_quadratic() {
        let f = SmoothOracle::quadratic(DMatrix::identity(2, 2) * 4.0, v(&[0.0, 0.0])).unwrap();
        let (x1, x0) = (v(&[1.0, -2.0]), v(&[0.5, 3.0]));
        assert!((local_smooth_first(&f, &x1, &x0).unwrap() - 4.0).abs() < 1e-14);
        assert!((local_smooth_bregman(&f, &x1, &x0).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(local_smooth_first(&f, &x1, &x1).unwrap(), 0.0);
        let lin = SmoothOracle::linear(v(&[1.0, 2.0]));
        assert_eq!(local_smooth_bregman(&lin, &x1, &x0).unwrap(), 0.0);
    }

    #[test]
    fn history_running_max() {
        let mut h = CurvatureHistory::new(1.0, 0.1, 1.0);
        assert!((h.seed_floor() - 1.0 / 3.6).abs() < 1e-15);
        h.push(2.0, 0.0);
        h.push(0.0, 0.0);
        h.push(1.0, 0.0);
        assert_eq!(h.combined_max(3), 4.0);
        assert_eq!(h.op_running_max(3), 2.0);
        assert_eq!(h.op_running_max(0), h.seed_term());
    }
}
