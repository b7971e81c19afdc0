//! Auto-conditioned ADMM for `min F(x) + G(w)` subject to `Bw − Kx = b`.
//!
//! Stepsizes depend on local estimates of `‖K‖` only; `B` enters solely through
//! the augmented subproblem.

use crate::driver::{
    self, check_finite, choose_eta1, first_curvature, resolve_x0, unit_probe, Algorithm,
    AverageAccumulator, LastIterates, PrimalDualMethod, SolveOptions, SolveReport, StopRule,
};
use crate::error::{check_dim, Error, Result};
use crate::estimators::{local_op_norm, seed_op_norm};
use crate::linalg::{LinearMap, RealVector};
use crate::oracles::{AugmentedOracle, ProxOracle};
use crate::pdhg::ConstrainedCertificate;
use crate::scheduler::{Scheduler, SchedulerConfig, Variant};

/// Two-block linearly constrained problem with prox-friendly `F`.
#[derive(Debug, Clone)]
pub struct TwoBlockProblem {
    f: ProxOracle,
    g_aug: AugmentedOracle,
    k: LinearMap,
    b: RealVector,
}

impl TwoBlockProblem {
    pub fn new(f: ProxOracle, g_aug: AugmentedOracle, k: LinearMap, b: RealVector) -> Result<Self> {
        check_dim("K columns vs X", f.dim(), k.cols())?;
        check_dim("K rows vs b", k.rows(), b.len())?;
        check_dim("B rows vs b", g_aug.b().rows(), b.len())?;
        Ok(Self { f, g_aug, k, b })
    }

    pub fn f(&self) -> &ProxOracle {
        &self.f
    }

    pub fn g_aug(&self) -> &AugmentedOracle {
        &self.g_aug
    }

    pub fn k(&self) -> &LinearMap {
        &self.k
    }

    pub fn b(&self) -> &RealVector {
        &self.b
    }

    /// Same problem after `B → cB`, `G(w) → G(cw)`, `W → W/c`.
    pub fn rescaled_b(&self, c: f64) -> Result<Self> {
        Self::new(self.f.clone(), self.g_aug.scaled_input(c)?, self.k.clone(), self.b.clone())
    }
}

/// First-block-free ADMM pieces shared with the accelerated variant.
pub(crate) struct TwoBlockStart {
    pub w0: RealVector,
    pub y0: RealVector,
}

/// `w₀ = argmin G(w) + 1/(2μ)‖Bw − Kx₀ − b‖²`, `y₀ = (Kx₀ − Bw₀ + b)/μ`.
pub(crate) fn two_block_start(
    g_aug: &AugmentedOracle,
    kx0: &RealVector,
    b: &RealVector,
    mu: f64,
) -> Result<TwoBlockStart> {
    let target = kx0 + b;
    let w0 = g_aug.solve(mu, &target)?;
    let y0 = (target - g_aug.b().forward(&w0)?) / mu;
    Ok(TwoBlockStart { w0, y0 })
}

/// The `w`- and `y`-updates given `Kx_t`.
pub(crate) fn two_block_dual_step(
    g_aug: &AugmentedOracle,
    kx: &RealVector,
    b: &RealVector,
    y_prev: &RealVector,
    tau: f64,
    mu: f64,
) -> Result<(RealVector, RealVector, f64)> {
    let rho_inv = tau + mu;
    let target = kx + b + y_prev * tau;
    let w = g_aug.solve(rho_inv, &target)?;
    let residual = g_aug.residual(&w, rho_inv, &target)?;
    // y_t = [τ y_{t−1} − (Bw_t − Kx_t − b)]/(τ + μ)
    let y = (y_prev * tau - (g_aug.b().forward(&w)? - kx - b)) / rho_inv;
    Ok((w, y, residual))
}

#[derive(Debug, Clone)]
pub struct AdmmState<'a> {
    problem: &'a TwoBlockProblem,
    mu: f64,
    beta: f64,
    x0: RealVector,
    x: RealVector,
    xbar: RealVector,
    w: RealVector,
    y: RealVector,
    y_prev: RealVector,
    w_residual: f64,
    first_step_sq: f64,
    scheduler: Scheduler,
    averages: AverageAccumulator,
    k: usize,
    halvings: usize,
}

impl<'a> AdmmState<'a> {
    pub fn initialize(
        problem: &'a TwoBlockProblem,
        config: &SchedulerConfig,
        opts: &SolveOptions,
    ) -> Result<Self> {
        config.validate()?;
        if opts.ytilde0.as_ref().is_some_and(|y| y.iter().any(|v| *v != 0.0)) {
            log::warn!("the ADMM variant always anchors the dual at zero");
        }
        let x0 = resolve_x0(opts, problem.f.domain())?;
        let kx0 = problem.k.forward(&x0)?;
        let start = two_block_start(&problem.g_aug, &kx0, &problem.b, config.mu_d)?;
        let seed = if config.eta1.is_some() {
            0.0
        } else {
            let zero = RealVector::zeros(problem.b.len());
            seed_op_norm(&problem.k, &zero, &start.y0, &unit_probe(problem.b.len(), opts.seed))?
        };
        let (eta1, halvings) = choose_eta1(config, seed, |e| {
            let mut trial = Self::build(problem, config, &x0, &start, e, 0)?;
            trial.iterate()?;
            Ok(first_curvature(&trial.scheduler))
        })?;
        Self::build(problem, config, &x0, &start, eta1, halvings)
    }

    fn build(
        problem: &'a TwoBlockProblem,
        config: &SchedulerConfig,
        x0: &RealVector,
        start: &TwoBlockStart,
        eta1: f64,
        halvings: usize,
    ) -> Result<Self> {
        Ok(Self {
            problem,
            mu: config.mu_d,
            beta: config.beta,
            x0: x0.clone(),
            x: x0.clone(),
            xbar: x0.clone(),
            w: start.w0.clone(),
            y: start.y0.clone(),
            y_prev: start.y0.clone(),
            w_residual: 0.0,
            first_step_sq: 0.0,
            scheduler: Scheduler::new(config, Variant::Base, eta1)?,
            averages: AverageAccumulator::new(x0.len(), start.y0.len(), Some(start.w0.len())),
            k: 0,
            halvings,
        })
    }

    pub fn x(&self) -> &RealVector {
        &self.x
    }

    pub fn w(&self) -> &RealVector {
        &self.w
    }

    pub fn y(&self) -> &RealVector {
        &self.y
    }

    pub fn y_prev(&self) -> &RealVector {
        &self.y_prev
    }

    pub fn x_hat(&self) -> Option<RealVector> {
        self.averages.x_hat()
    }

    pub fn w_hat(&self) -> Option<RealVector> {
        self.averages.w_hat()
    }

    pub fn y_tilde(&self) -> Option<RealVector> {
        self.averages.y_tilde(self.mu)
    }
}

impl PrimalDualMethod for AdmmState<'_> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Admm
    }

    fn iterate(&mut self) -> Result<()> {
        let st = self.scheduler.current();
        let t = st.t;
        let p = self.problem;
        let kty = p.k.adjoint(&self.y)?;
        let x = p.f.prox(&kty, &self.xbar, st.eta)?;
        let xbar = if t == 1 {
            self.xbar.clone()
        } else {
            &self.xbar * (1.0 - self.beta) + &x * self.beta
        };
        let kx = p.k.forward(&x)?;
        let (w, y, w_residual) = two_block_dual_step(&p.g_aug, &kx, &p.b, &self.y, st.tau, self.mu)?;
        check_finite(&x, t)?;
        check_finite(&w, t)?;
        check_finite(&y, t)?;
        let l = local_op_norm(&p.k, &y, &self.y)?;
        let next = self.scheduler.advance(l, 0.0)?;
        self.averages.commit(next.eta, &x, &y, &self.y, st.tau, self.mu, Some(&w));
        if t == 1 {
            self.first_step_sq = (&x - &self.x0).norm_squared();
        }
        self.y_prev = std::mem::replace(&mut self.y, y);
        self.x = x;
        self.xbar = xbar;
        self.w = w;
        self.w_residual = w_residual;
        self.k = t;
        Ok(())
    }

    fn iterations(&self) -> usize {
        self.k
    }

    fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    fn averages(&self) -> &AverageAccumulator {
        &self.averages
    }

    fn first_step_sq(&self) -> f64 {
        self.first_step_sq
    }

    fn constraint_residual(&self) -> Result<Option<RealVector>> {
        match (self.averages.x_hat(), self.averages.w_hat()) {
            (Some(xh), Some(wh)) => Ok(Some(
                self.problem.k.forward(&xh)? - self.problem.g_aug.b().forward(&wh)? + &self.problem.b,
            )),
            _ => Ok(None),
        }
    }

    fn last_iterates(&self) -> LastIterates {
        LastIterates {
            x: self.x.clone(),
            xbar: self.xbar.clone(),
            y: self.y.clone(),
            w: Some(self.w.clone()),
        }
    }

    fn start(&self) -> (RealVector, RealVector) {
        (self.x0.clone(), RealVector::zeros(self.y.len()))
    }

    fn line_search_halvings(&self) -> usize {
        self.halvings
    }

    fn w_residual(&self) -> Option<f64> {
        Some(self.w_residual)
    }
}

pub fn solve(
    problem: &TwoBlockProblem,
    config: &SchedulerConfig,
    stop: StopRule,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    driver::run(AdmmState::initialize(problem, config, opts)?, stop, opts)
}

/// Constrained report: `F(x̂)+G(ŵ) − F(x*) − G(w*)` against its certified bound.
pub fn constrained_report(
    state: &AdmmState<'_>,
    opts: &SolveOptions,
    x_star: Option<&RealVector>,
    w_star: Option<&RealVector>,
    y_star: Option<&RealVector>,
) -> Result<ConstrainedCertificate> {
    let cert = driver::certificate(state, opts)?;
    let p = state.problem;
    let gap = match (x_star, w_star) {
        (Some(xs), Some(ws)) => {
            let xh = state.x_hat().expect("k >= 1");
            let wh = state.w_hat().expect("k >= 1");
            Some(p.f.value(&xh)? + p.g_aug.g().value(&wh)? - p.f.value(xs)? - p.g_aug.g().value(ws)?)
        }
        _ => None,
    };
    ConstrainedCertificate::assemble(&cert, &state.y_tilde().expect("k >= 1"), gap, &state.x0, x_star, y_star)
}

/// Largest deviations between a run and its `B`-rescaled twin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingReport {
    pub iterations: usize,
    /// Max over `x_t`, `y_t`, `Bw_t` of `‖a − b‖∞ / (1 + ‖a‖∞)`.
    pub trajectory_deviation: f64,
    /// Max relative deviation over `η_t`, `τ_t`, `L_t`.
    pub stepsize_deviation: f64,
}

fn rel_dev(a: &RealVector, b: &RealVector) -> f64 {
    (a - b).amax() / (1.0 + a.amax())
}

fn rel_scalar(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Runs `problem` and its `B → cB` reparameterization side by side for
/// `iters` iterations and reports the largest deviations of the sequences that
/// should coincide.
pub fn b_scaling_invariance_check(
    problem: &TwoBlockProblem,
    config: &SchedulerConfig,
    opts: &SolveOptions,
    c: f64,
    iters: usize,
) -> Result<ScalingReport> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("scale must be positive, got {c}")));
    }
    let scaled = problem.rescaled_b(c)?;
    let mut a = AdmmState::initialize(problem, config, opts)?;
    let mut b = AdmmState::initialize(&scaled, config, opts)?;
    let mut traj = 0.0_f64;
    let mut steps = rel_scalar(a.scheduler.eta(1), b.scheduler.eta(1));
    for _ in 0..iters {
        a.iterate()?;
        b.iterate()?;
        traj = traj
            .max(rel_dev(&a.x, &b.x))
            .max(rel_dev(&a.y, &b.y))
            .max(rel_dev(&problem.g_aug.b().forward(&a.w)?, &scaled.g_aug.b().forward(&b.w)?));
        let t = a.k;
        steps = steps
            .max(rel_scalar(a.scheduler.eta(t + 1), b.scheduler.eta(t + 1)))
            .max(rel_scalar(a.scheduler.tau(t + 1), b.scheduler.tau(t + 1)))
            .max(rel_scalar(
                a.scheduler.history().op_estimates()[t - 1],
                b.scheduler.history().op_estimates()[t - 1],
            ));
    }
    Ok(ScalingReport {
        iterations: iters,
        trajectory_deviation: traj,
        stepsize_deviation: steps,
    })
}
