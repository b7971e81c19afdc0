//! Accelerated variants for a smooth primal part: the gradient is taken at an
//! extra averaged search point `x̃`, and the stepsize cap combines the operator
//! estimate with a local smoothness estimate.

use crate::admm::{two_block_dual_step, two_block_start, TwoBlockStart};
use crate::driver::{
    self, check_finite, choose_eta1, first_curvature, resolve_anchor, resolve_x0, unit_probe,
    Algorithm, AverageAccumulator, LastIterates, PrimalDualMethod, SolveOptions, SolveReport,
    StopRule,
};
use crate::error::{check_dim, Error, Result};
use crate::estimators::{local_op_norm, secant_ratio, seed_op_norm, smooth_ratio};
use crate::linalg::{BoxSet, LinearMap, RealVector};
use crate::oracles::{dual_prox, AugmentedOracle, ProxOracle, SmoothOracle};
use crate::pdhg::ConstrainedCertificate;
use crate::scheduler::{Scheduler, SchedulerConfig, Variant};

/// `min_{x∈X} max_{y∈Y} f(x) + ⟨Ax, y⟩ − g(y)` with smooth `f`.
#[derive(Debug, Clone)]
pub struct SmoothSaddleProblem {
    f: SmoothOracle,
    x_set: ProxOracle,
    g: ProxOracle,
    a: LinearMap,
    b: Option<RealVector>,
}

impl SmoothSaddleProblem {
    pub fn new(f: SmoothOracle, x_domain: BoxSet, g: ProxOracle, a: LinearMap) -> Result<Self> {
        check_dim("f vs X", x_domain.dim(), f.dim())?;
        check_dim("A columns vs X", x_domain.dim(), a.cols())?;
        check_dim("A rows vs Y", g.dim(), a.rows())?;
        Ok(Self {
            f,
            x_set: ProxOracle::indicator(x_domain),
            g,
            a,
            b: None,
        })
    }

    /// `min_{x∈X} f(x)` subject to `Ax = b`.
    pub fn constrained(f: SmoothOracle, x_domain: BoxSet, a: LinearMap, b: RealVector) -> Result<Self> {
        check_dim("A rows vs b", a.rows(), b.len())?;
        let g = ProxOracle::linear(b.clone(), BoxSet::free(b.len()))?;
        let mut p = Self::new(f, x_domain, g, a)?;
        p.b = Some(b);
        Ok(p)
    }

    pub fn f(&self) -> &SmoothOracle {
        &self.f
    }

    pub fn x_domain(&self) -> &BoxSet {
        self.x_set.domain()
    }

    pub fn g(&self) -> &ProxOracle {
        &self.g
    }

    pub fn a(&self) -> &LinearMap {
        &self.a
    }

    pub fn b(&self) -> Option<&RealVector> {
        self.b.as_ref()
    }

    pub fn is_constrained(&self) -> bool {
        self.b.is_some()
    }
}

/// `min F(x) + G(w)` subject to `Bw − Kx = b` with smooth `F`.
#[derive(Debug, Clone)]
pub struct SmoothTwoBlockProblem {
    f: SmoothOracle,
    x_set: ProxOracle,
    g_aug: AugmentedOracle,
    k: LinearMap,
    b: RealVector,
}

impl SmoothTwoBlockProblem {
    pub fn new(
        f: SmoothOracle,
        x_domain: BoxSet,
        g_aug: AugmentedOracle,
        k: LinearMap,
        b: RealVector,
    ) -> Result<Self> {
        check_dim("F vs X", x_domain.dim(), f.dim())?;
        check_dim("K columns vs X", x_domain.dim(), k.cols())?;
        check_dim("K rows vs b", k.rows(), b.len())?;
        check_dim("B rows vs b", g_aug.b().rows(), b.len())?;
        Ok(Self {
            f,
            x_set: ProxOracle::indicator(x_domain),
            g_aug,
            k,
            b,
        })
    }

    pub fn f(&self) -> &SmoothOracle {
        &self.f
    }

    pub fn x_domain(&self) -> &BoxSet {
        self.x_set.domain()
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

    pub fn rescaled_b(&self, c: f64) -> Result<Self> {
        Self::new(
            self.f.clone(),
            self.x_domain().clone(),
            self.g_aug.scaled_input(c)?,
            self.k.clone(),
            self.b.clone(),
        )
    }
}

/// The smooth-part bookkeeping shared by both accelerated methods.
#[derive(Debug, Clone)]
struct SearchPoint {
    xtilde: RealVector,
    value: f64,
    grad: RealVector,
    calls: usize,
}

impl SearchPoint {
    fn new(f: &SmoothOracle, x0: &RealVector) -> Result<Self> {
        if !f.is_evaluable() {
            return Err(Error::NotEvaluable);
        }
        let (value, grad) = f.gradient(x0)?;
        Ok(Self {
            xtilde: x0.clone(),
            value,
            grad,
            calls: 1,
        })
    }

    /// Forms `x̃_t`, evaluates the gradient there once and returns `Lf_t`.
    fn advance(&mut self, f: &SmoothOracle, x: &RealVector, tilde_tau: f64, t: usize) -> Result<f64> {
        let xtilde = if tilde_tau == 0.0 {
            x.clone()
        } else {
            (x + &self.xtilde * tilde_tau) / (1.0 + tilde_tau)
        };
        let (value, grad) = f.gradient(&xtilde)?;
        self.calls += 1;
        if !value.is_finite() {
            return Err(Error::Divergence { iteration: t });
        }
        check_finite(&grad, t)?;
        let lf = if t == 1 {
            secant_ratio(&grad, &self.grad, &xtilde, &self.xtilde)
        } else {
            smooth_ratio(f, value, &grad, &xtilde, self.value, &self.grad, &self.xtilde)
        };
        self.xtilde = xtilde;
        self.value = value;
        self.grad = grad;
        Ok(lf)
    }
}

#[derive(Debug, Clone)]
pub struct ApdhgState<'a> {
    problem: &'a SmoothSaddleProblem,
    mu: f64,
    beta: f64,
    x0: RealVector,
    ytilde0: RealVector,
    x: RealVector,
    xbar: RealVector,
    search: SearchPoint,
    xtilde_prev: RealVector,
    y: RealVector,
    y_prev: RealVector,
    first_step_sq: f64,
    scheduler: Scheduler,
    averages: AverageAccumulator,
    k: usize,
    halvings: usize,
}

impl<'a> ApdhgState<'a> {
    pub fn initialize(
        problem: &'a SmoothSaddleProblem,
        config: &SchedulerConfig,
        opts: &SolveOptions,
    ) -> Result<Self> {
        config.validate()?;
        let x0 = resolve_x0(opts, problem.x_domain())?;
        let ytilde0 = resolve_anchor(opts, problem.a.rows(), problem.is_constrained())?;
        let minus_ax0 = -problem.a.forward(&x0)?;
        let y0 = dual_prox(&problem.g, &minus_ax0, &ytilde0, config.mu_d, 0.0, &ytilde0)?;
        let seed = if config.eta1.is_some() {
            0.0
        } else {
            seed_op_norm(&problem.a, &ytilde0, &y0, &unit_probe(problem.a.rows(), opts.seed))?
        };
        let search = SearchPoint::new(&problem.f, &x0)?;
        let (eta1, halvings) = choose_eta1(config, seed, |e| {
            let mut trial = Self::build(problem, config, &x0, &ytilde0, &y0, &search, e, 0)?;
            trial.iterate()?;
            Ok(first_curvature(&trial.scheduler))
        })?;
        Self::build(problem, config, &x0, &ytilde0, &y0, &search, eta1, halvings)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        problem: &'a SmoothSaddleProblem,
        config: &SchedulerConfig,
        x0: &RealVector,
        ytilde0: &RealVector,
        y0: &RealVector,
        search: &SearchPoint,
        eta1: f64,
        halvings: usize,
    ) -> Result<Self> {
        Ok(Self {
            problem,
            mu: config.mu_d,
            beta: config.beta,
            x0: x0.clone(),
            ytilde0: ytilde0.clone(),
            x: x0.clone(),
            xbar: x0.clone(),
            search: search.clone(),
            xtilde_prev: x0.clone(),
            y: y0.clone(),
            y_prev: y0.clone(),
            first_step_sq: 0.0,
            scheduler: Scheduler::new(config, Variant::Accelerated, eta1)?,
            averages: AverageAccumulator::new(x0.len(), y0.len(), None),
            k: 0,
            halvings,
        })
    }

    pub fn x(&self) -> &RealVector {
        &self.x
    }

    pub fn xtilde(&self) -> &RealVector {
        &self.search.xtilde
    }

    pub fn xtilde_prev(&self) -> &RealVector {
        &self.xtilde_prev
    }

    pub fn y(&self) -> &RealVector {
        &self.y
    }

    pub fn x_hat(&self) -> Option<RealVector> {
        self.averages.x_hat()
    }

    pub fn y_hat(&self) -> Option<RealVector> {
        self.averages.y_hat()
    }

    pub fn y_tilde(&self) -> Option<RealVector> {
        self.averages.y_tilde(self.mu)
    }
}

impl PrimalDualMethod for ApdhgState<'_> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Apdhg
    }

    fn iterate(&mut self) -> Result<()> {
        let st = self.scheduler.current();
        let t = st.t;
        let p = self.problem;
        let lin = p.a.adjoint(&self.y)? + &self.search.grad;
        let x = p.x_set.prox(&lin, &self.xbar, st.eta)?;
        let xbar = if t == 1 {
            self.xbar.clone()
        } else {
            &self.xbar * (1.0 - self.beta) + &x * self.beta
        };
        check_finite(&x, t)?;
        let xtilde_prev = self.search.xtilde.clone();
        let lf = self.search.advance(&p.f, &x, st.tilde_tau.unwrap_or(0.0), t)?;
        let minus_ax = -p.a.forward(&x)?;
        let y = dual_prox(&p.g, &minus_ax, &self.ytilde0, self.mu, st.tau, &self.y)?;
        check_finite(&y, t)?;
        let l = local_op_norm(&p.a, &y, &self.y)?;
        let next = self.scheduler.advance(l, lf)?;
        self.averages.commit(next.eta, &x, &y, &self.y, st.tau, self.mu, None);
        if t == 1 {
            self.first_step_sq = (&x - &self.x0).norm_squared();
        }
        self.xtilde_prev = xtilde_prev;
        self.y_prev = std::mem::replace(&mut self.y, y);
        self.x = x;
        self.xbar = xbar;
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
        match (&self.problem.b, self.averages.x_hat()) {
            (Some(b), Some(xh)) => Ok(Some(self.problem.a.forward(&xh)? - b)),
            _ => Ok(None),
        }
    }

    fn last_iterates(&self) -> LastIterates {
        LastIterates {
            x: self.x.clone(),
            xbar: self.xbar.clone(),
            y: self.y.clone(),
            w: None,
        }
    }

    fn start(&self) -> (RealVector, RealVector) {
        (self.x0.clone(), self.ytilde0.clone())
    }

    fn line_search_halvings(&self) -> usize {
        self.halvings
    }

    fn gradient_calls(&self) -> Option<usize> {
        Some(self.search.calls)
    }
}

pub fn apdhg_solve(
    problem: &SmoothSaddleProblem,
    config: &SchedulerConfig,
    stop: StopRule,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    driver::run(ApdhgState::initialize(problem, config, opts)?, stop, opts)
}

pub fn apdhg_constrained_report(
    state: &ApdhgState<'_>,
    opts: &SolveOptions,
    x_star: Option<&RealVector>,
    y_star: Option<&RealVector>,
) -> Result<ConstrainedCertificate> {
    if !state.problem.is_constrained() {
        return Err(Error::InvalidConfig("not a constrained problem".into()));
    }
    let cert = driver::certificate(state, opts)?;
    let xh = state.x_hat().expect("k >= 1");
    let gap = x_star
        .map(|xs| Ok::<_, Error>(state.problem.f.value(&xh)? - state.problem.f.value(xs)?))
        .transpose()?;
    ConstrainedCertificate::assemble(&cert, &state.y_tilde().expect("k >= 1"), gap, &state.x0, x_star, y_star)
}

#[derive(Debug, Clone)]
pub struct AadmmState<'a> {
    problem: &'a SmoothTwoBlockProblem,
    mu: f64,
    beta: f64,
    x0: RealVector,
    x: RealVector,
    xbar: RealVector,
    search: SearchPoint,
    xtilde_prev: RealVector,
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

impl<'a> AadmmState<'a> {
    pub fn initialize(
        problem: &'a SmoothTwoBlockProblem,
        config: &SchedulerConfig,
        opts: &SolveOptions,
    ) -> Result<Self> {
        config.validate()?;
        let x0 = resolve_x0(opts, problem.x_domain())?;
        let kx0 = problem.k.forward(&x0)?;
        let start = two_block_start(&problem.g_aug, &kx0, &problem.b, config.mu_d)?;
        let seed = if config.eta1.is_some() {
            0.0
        } else {
            let zero = RealVector::zeros(problem.b.len());
            seed_op_norm(&problem.k, &zero, &start.y0, &unit_probe(problem.b.len(), opts.seed))?
        };
        let search = SearchPoint::new(&problem.f, &x0)?;
        let (eta1, halvings) = choose_eta1(config, seed, |e| {
            let mut trial = Self::build(problem, config, &x0, &start, &search, e, 0)?;
            trial.iterate()?;
            Ok(first_curvature(&trial.scheduler))
        })?;
        Self::build(problem, config, &x0, &start, &search, eta1, halvings)
    }

    fn build(
        problem: &'a SmoothTwoBlockProblem,
        config: &SchedulerConfig,
        x0: &RealVector,
        start: &TwoBlockStart,
        search: &SearchPoint,
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
            search: search.clone(),
            xtilde_prev: x0.clone(),
            w: start.w0.clone(),
            y: start.y0.clone(),
            y_prev: start.y0.clone(),
            w_residual: 0.0,
            first_step_sq: 0.0,
            scheduler: Scheduler::new(config, Variant::Accelerated, eta1)?,
            averages: AverageAccumulator::new(x0.len(), start.y0.len(), Some(start.w0.len())),
            k: 0,
            halvings,
        })
    }

    pub fn x(&self) -> &RealVector {
        &self.x
    }

    pub fn xtilde(&self) -> &RealVector {
        &self.search.xtilde
    }

    pub fn xtilde_prev(&self) -> &RealVector {
        &self.xtilde_prev
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

impl PrimalDualMethod for AadmmState<'_> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Aadmm
    }

    fn iterate(&mut self) -> Result<()> {
        let st = self.scheduler.current();
        let t = st.t;
        let p = self.problem;
        let lin = p.k.adjoint(&self.y)? + &self.search.grad;
        let x = p.x_set.prox(&lin, &self.xbar, st.eta)?;
        let xbar = if t == 1 {
            self.xbar.clone()
        } else {
            &self.xbar * (1.0 - self.beta) + &x * self.beta
        };
        check_finite(&x, t)?;
        let xtilde_prev = self.search.xtilde.clone();
        let lf = self.search.advance(&p.f, &x, st.tilde_tau.unwrap_or(0.0), t)?;
        let kx = p.k.forward(&x)?;
        let (w, y, w_residual) = two_block_dual_step(&p.g_aug, &kx, &p.b, &self.y, st.tau, self.mu)?;
        check_finite(&w, t)?;
        check_finite(&y, t)?;
        let l = local_op_norm(&p.k, &y, &self.y)?;
        let next = self.scheduler.advance(l, lf)?;
        self.averages.commit(next.eta, &x, &y, &self.y, st.tau, self.mu, Some(&w));
        if t == 1 {
            self.first_step_sq = (&x - &self.x0).norm_squared();
        }
        self.xtilde_prev = xtilde_prev;
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

    fn gradient_calls(&self) -> Option<usize> {
        Some(self.search.calls)
    }
}

pub fn aadmm_solve(
    problem: &SmoothTwoBlockProblem,
    config: &SchedulerConfig,
    stop: StopRule,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    driver::run(AadmmState::initialize(problem, config, opts)?, stop, opts)
}

pub fn aadmm_constrained_report(
    state: &AadmmState<'_>,
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
