//! Gap functions, certified bounds and the guess-and-check drivers for an
//! unknown dual radius.

use serde::{Deserialize, Serialize};

use crate::accel::SmoothSaddleProblem;
use crate::admm::{self, TwoBlockProblem};
use crate::driver::{Certificate, SolveOptions, SolveReport, StopReason, StopRule};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{BoxSet, RealVector};
use crate::oracles::{ProxOracle, SmoothOracle};
use crate::pdhg::{self, SaddleProblem};
use crate::scheduler::SchedulerConfig;

/// `6k + αk(k−3)`
pub fn denominator(k: usize, alpha: f64) -> f64 {
    let k = k as f64;
    6.0 * k + alpha * k * (k - 3.0)
}

fn check_k(k: usize) -> Result<()> {
    if k < 3 {
        Err(Error::TooFewIterations(k))
    } else {
        Ok(())
    }
}

/// `12Ĉ_k/D(k)·(1/β + 5/8)D_X² + μ/2·D_Y²`
pub fn bounded_gap_bound(cert: &Certificate, d_x: f64, d_y: f64) -> Result<f64> {
    check_k(cert.k)?;
    let c = 12.0 * cert.curvature_max / denominator(cert.k, cert.alpha);
    Ok(c * (1.0 / cert.beta + 0.625) * d_x * d_x + 0.5 * cert.mu_d * d_y * d_y)
}

/// `‖x0 − x*‖²/β + (5η₂C₁/2 − η₂/(2η₁))‖x1 − x0‖²`, floored at zero.
fn bracket(cert: &Certificate, dist_sq: f64) -> f64 {
    let coef = 2.5 * cert.eta2 * cert.first_curvature - cert.eta2 / (2.0 * cert.eta1);
    (dist_sq / cert.beta + coef * cert.first_step_sq).max(0.0)
}

/// Optimality-gap bound `12Ĉ_k/D(k)·bracket` in constrained mode.
pub fn optimality_rhs(cert: &Certificate, dist_sq: f64) -> Result<f64> {
    check_k(cert.k)?;
    Ok(12.0 * cert.curvature_max / denominator(cert.k, cert.alpha) * bracket(cert, dist_sq))
}

/// Violation bound `2μ‖y*‖ + 2√(12μĈ_k/D(k)·bracket)` in constrained mode.
pub fn violation_rhs(cert: &Certificate, dist_sq: f64, y_star_norm: f64) -> Result<f64> {
    check_k(cert.k)?;
    let inner = 12.0 * cert.mu_d * cert.curvature_max / denominator(cert.k, cert.alpha) * bracket(cert, dist_sq);
    Ok(2.0 * cert.mu_d * y_star_norm + 2.0 * inner.sqrt())
}

/// `E1 = 12L̂²D_X²/(μβD(k))`, `E2 = 4√(12L̂²D_X²/(βD(k)))` for the operator
/// running max `L̂`.
pub fn error_bounds(k: usize, l_hat: f64, mu: f64, beta: f64, alpha: f64, d_x: f64) -> Result<(f64, f64)> {
    error_bounds_from_curvature(k, l_hat * l_hat / mu, mu, beta, alpha, d_x)
}

/// [`error_bounds`] in terms of the combined curvature `Ĉ = L̂²/μ (+ Lf)`.
pub fn error_bounds_from_curvature(
    k: usize,
    c_hat: f64,
    mu: f64,
    beta: f64,
    alpha: f64,
    d_x: f64,
) -> Result<(f64, f64)> {
    check_k(k)?;
    let base = 12.0 * c_hat * d_x * d_x / (beta * denominator(k, alpha));
    Ok((base, 4.0 * (mu * base).sqrt()))
}

/// A point of a bilinear saddle problem.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub x: &'a RealVector,
    pub y: &'a RealVector,
}

/// A point `(x, w, y)` of a two-block problem.
#[derive(Debug, Clone, Copy)]
pub struct ThreePoint<'a> {
    pub x: &'a RealVector,
    pub w: &'a RealVector,
    pub y: &'a RealVector,
}

fn bilinear_gap(
    f: impl Fn(&RealVector) -> Result<f64>,
    g: &ProxOracle,
    a: &crate::linalg::LinearMap,
    z_bar: Point<'_>,
    z: Point<'_>,
) -> Result<f64> {
    let left = f(z_bar.x)? + a.forward(z_bar.x)?.dot(z.y) - g.value(z.y)?;
    let right = f(z.x)? + a.forward(z.x)?.dot(z_bar.y) - g.value(z_bar.y)?;
    Ok(left - right)
}

/// `Q(z̄, z) = f(x̄) + ⟨Ax̄, y⟩ − g(y) − [f(x) + ⟨Ax, ȳ⟩ − g(ȳ)]`
pub fn gap_at(problem: &SaddleProblem, z_bar: Point<'_>, z: Point<'_>) -> Result<f64> {
    bilinear_gap(|x| problem.f().value(x), problem.g(), problem.a(), z_bar, z)
}

/// [`gap_at`] with smooth `f`.
pub fn smooth_gap_at(problem: &SmoothSaddleProblem, z_bar: Point<'_>, z: Point<'_>) -> Result<f64> {
    bilinear_gap(|x| problem.f().value(x), problem.g(), problem.a(), z_bar, z)
}

/// `Q(z̄, z) = F(x̄) + G(w̄) + ⟨Kx̄ − Bw̄ + b, y⟩ − [F(x) + G(w) + ⟨Kx − Bw + b, ȳ⟩]`
pub fn two_block_gap_at(problem: &TwoBlockProblem, z_bar: ThreePoint<'_>, z: ThreePoint<'_>) -> Result<f64> {
    let residual = |p: ThreePoint<'_>| -> Result<RealVector> {
        Ok(problem.k().forward(p.x)? - problem.g_aug().b().forward(p.w)? + problem.b())
    };
    let g = problem.g_aug().g();
    let left = problem.f().value(z_bar.x)? + g.value(z_bar.w)? + residual(z_bar)?.dot(z.y);
    let right = problem.f().value(z.x)? + g.value(z.w)? + residual(z)?.dot(z_bar.y);
    Ok(left - right)
}

/// `max_{v ∈ box} ⟨a, v⟩ − h(v)` for separable prox-friendly `h`.
fn prox_conjugate_on_box(h: &ProxOracle, a: &RealVector) -> Result<f64> {
    if !h.domain().is_bounded() {
        return Err(Error::Unsupported("sup-gap needs bounded boxes".into()));
    }
    if !h.is_evaluable() {
        return Err(Error::NotEvaluable);
    }
    let mut total = 0.0;
    for i in 0..a.len() {
        total += h
            .coord_conjugate_on_box(i, a[i])
            .ok_or_else(|| Error::Unsupported("unbounded coordinate in sup-gap".into()))?;
    }
    Ok(total)
}

/// Largest dimension served by the grid fallback.
pub const GRID_MAX_DIM: usize = 2;

/// `max_{x ∈ X} ⟨a, x⟩ − f(x)` for smooth `f`: closed form for diagonal
/// quadratics, a grid with step `1e-3·(u_i − l_i)` otherwise.
fn smooth_conjugate_on_box(f: &SmoothOracle, domain: &BoxSet, a: &RealVector) -> Result<f64> {
    if !domain.is_bounded() {
        return Err(Error::Unsupported("sup-gap needs bounded boxes".into()));
    }
    if let Some((p, q)) = f.diagonal_quadratic() {
        let mut total = 0.0;
        for i in 0..a.len() {
            let (l, u) = (domain.lower()[i], domain.upper()[i]);
            let obj = |x: f64| a[i] * x - 0.5 * p[i] * x * x - q[i] * x;
            let best = if p[i] > 0.0 {
                obj(((a[i] - q[i]) / p[i]).clamp(l, u))
            } else {
                obj(l).max(obj(u))
            };
            total += best;
        }
        return Ok(total);
    }
    let n = domain.dim();
    if n > GRID_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "sup-gap grid fallback covers dims <= {GRID_MAX_DIM}, got {n}"
        )));
    }
    const STEPS: usize = 1000;
    let coord = |i: usize, j: usize| {
        let (l, u) = (domain.lower()[i], domain.upper()[i]);
        l + (u - l) * j as f64 / STEPS as f64
    };
    let mut best = f64::NEG_INFINITY;
    let mut x = RealVector::zeros(n);
    let total = (STEPS + 1).pow(n as u32);
    for idx in 0..total {
        let mut r = idx;
        for i in 0..n {
            x[i] = coord(i, r % (STEPS + 1));
            r /= STEPS + 1;
        }
        best = best.max(a.dot(&x) - f.value(&x)?);
    }
    Ok(best)
}

/// `max_{z ∈ X×Y} Q(z̄, z)` on bounded boxes, split as
/// `f(x̄) + g(ȳ) + max_y[⟨Ax̄, y⟩ − g(y)] + max_x[−⟨Aᵀȳ, x⟩ − f(x)]`.
pub fn gap_sup_box(problem: &SaddleProblem, z_bar: Point<'_>) -> Result<f64> {
    let (f, g, a) = (problem.f(), problem.g(), problem.a());
    let ax = a.forward(z_bar.x)?;
    let aty = a.adjoint(z_bar.y)?;
    Ok(f.value(z_bar.x)? + g.value(z_bar.y)? + prox_conjugate_on_box(g, &ax)? + prox_conjugate_on_box(f, &-aty)?)
}

/// [`gap_sup_box`] with smooth `f`.
pub fn smooth_gap_sup_box(problem: &SmoothSaddleProblem, z_bar: Point<'_>) -> Result<f64> {
    let (f, g, a) = (problem.f(), problem.g(), problem.a());
    let ax = a.forward(z_bar.x)?;
    let aty = a.adjoint(z_bar.y)?;
    Ok(f.value(z_bar.x)?
        + g.value(z_bar.y)?
        + prox_conjugate_on_box(g, &ax)?
        + smooth_conjugate_on_box(f, problem.x_domain(), &-aty)?)
}

/// Inputs of the guess-and-check procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessCheckConfig {
    pub d_hat0: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Diameter of `X`.
    pub d_x: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
}

fn default_max_outer() -> usize {
    30
}

fn default_max_inner() -> usize {
    200_000
}

impl GuessCheckConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.d_hat0, "d_hat0")?;
        positive(self.eps1, "eps1")?;
        positive(self.eps2, "eps2")?;
        positive(self.d_x, "d_x")?;
        if self.max_outer == 0 || self.max_inner < 3 {
            return Err(Error::InvalidConfig("max_outer must be >= 1 and max_inner >= 3".into()));
        }
        Ok(())
    }

    fn mu(&self, i: usize) -> (f64, f64) {
        let d_hat = self.d_hat0 * 2f64.powi(i as i32);
        (d_hat, self.eps2 / (4.0 * d_hat))
    }
}

/// One outer iteration of guess-and-check.
#[derive(Debug, Clone)]
pub struct OuterRun {
    pub index: usize,
    pub d_hat: f64,
    pub mu_d: f64,
    pub violation: f64,
    pub report: SolveReport,
}

/// Result of guess-and-check: the last inner report is the solution.
#[derive(Debug, Clone)]
pub struct GuessCheckOutcome {
    pub d_hat_y: f64,
    pub outer_count: usize,
    pub runs: Vec<OuterRun>,
}

impl GuessCheckOutcome {
    pub fn solution(&self) -> &SolveReport {
        &self.runs.last().expect("at least one outer run").report
    }
}

fn guess_and_check<F>(gc: &GuessCheckConfig, config: &SchedulerConfig, mut solve: F) -> Result<GuessCheckOutcome>
where
    F: FnMut(&SchedulerConfig, StopRule) -> Result<SolveReport>,
{
    gc.validate()?;
    let mut runs = Vec::new();
    let mut last = (gc.d_hat0, f64::INFINITY);
    for i in 0..gc.max_outer {
        let (d_hat, mu) = gc.mu(i);
        let mut inner = config.clone();
        inner.mu_d = mu;
        // the seed formula depends on μ, so η₁ is reseeded every outer loop
        inner.eta1 = None;
        let stop = StopRule::ErrorBounds {
            eps1: gc.eps1,
            eps2: gc.eps2,
            max_iters: gc.max_inner,
        };
        let report = solve(&inner, stop)?;
        if report.stop_reason != StopReason::ErrorBounds {
            return Err(Error::InnerIterationCap(gc.max_inner));
        }
        let violation = report.certificate.violation.expect("constrained run");
        log::info!(
            "guess-and-check outer {i}: D_hat={d_hat}, mu={mu}, k={}, violation={violation}",
            report.iterations
        );
        runs.push(OuterRun {
            index: i,
            d_hat,
            mu_d: mu,
            violation,
            report,
        });
        if violation <= gc.eps2 {
            return Ok(GuessCheckOutcome {
                d_hat_y: d_hat,
                outer_count: i + 1,
                runs,
            });
        }
        last = (d_hat, violation);
    }
    Err(Error::GuessCheckExhausted {
        outer: gc.max_outer,
        d_hat: last.0,
        violation: last.1,
    })
}

/// Guess-and-check with the primal-dual hybrid gradient method on a
/// constrained problem with bounded `X`.
pub fn guess_and_check_pdhg(
    problem: &SaddleProblem,
    gc: &GuessCheckConfig,
    config: &SchedulerConfig,
    opts: &SolveOptions,
) -> Result<GuessCheckOutcome> {
    if !problem.is_constrained() {
        return Err(Error::InvalidConfig("guess-and-check needs a constrained problem".into()));
    }
    check_bounded(problem.f().domain())?;
    let opts = SolveOptions {
        d_x: Some(gc.d_x),
        ytilde0: None,
        ..opts.clone()
    };
    guess_and_check(gc, config, |c, stop| pdhg::solve(problem, c, stop, &opts))
}

/// Guess-and-check with the ADMM method on a two-block problem with bounded `X`.
pub fn guess_and_check_admm(
    problem: &TwoBlockProblem,
    gc: &GuessCheckConfig,
    config: &SchedulerConfig,
    opts: &SolveOptions,
) -> Result<GuessCheckOutcome> {
    check_bounded(problem.f().domain())?;
    let opts = SolveOptions {
        d_x: Some(gc.d_x),
        ..opts.clone()
    };
    guess_and_check(gc, config, |c, stop| admm::solve(problem, c, stop, &opts))
}

fn check_bounded(x: &BoxSet) -> Result<()> {
    if x.is_bounded() {
        Ok(())
    } else {
        Err(Error::InvalidConfig("guess-and-check needs a bounded X".into()))
    }
}

/// `max_{x ∈ X} ‖x − center‖` helper for callers setting `d_x`/`d_y`.
pub fn radius(domain: &BoxSet, center: &RealVector) -> Result<f64> {
    check_dim("radius center", domain.dim(), center.len())?;
    domain
        .radius_from(center)
        .ok_or_else(|| Error::Unsupported("unbounded box has no finite radius".into()))
}
