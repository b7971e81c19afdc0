//! Auto-conditioned primal-dual hybrid gradient for
//! `min_{x∈X} max_{y∈Y} f(x) + ⟨Ax, y⟩ − g(y)` with prox-friendly `f`, `g`.

use crate::driver::{
    self, check_finite, choose_eta1, first_curvature, resolve_anchor, resolve_x0, unit_probe,
    Algorithm, AverageAccumulator, Certificate, LastIterates, PrimalDualMethod, SolveOptions,
    SolveReport, StopRule,
};
use crate::error::{check_dim, Error, Result};
use crate::estimators::{local_op_norm, seed_op_norm};
use crate::linalg::{BoxSet, LinearMap, RealVector};
use crate::oracles::{dual_prox, ProxOracle};
use crate::scheduler::{Scheduler, SchedulerConfig, Variant};

/// Bilinear saddle problem with prox-friendly sides.
#[derive(Debug, Clone)]
pub struct SaddleProblem {
    f: ProxOracle,
    g: ProxOracle,
    a: LinearMap,
    b: Option<RealVector>,
}

impl SaddleProblem {
    pub fn new(f: ProxOracle, g: ProxOracle, a: LinearMap) -> Result<Self> {
        check_dim("A columns vs X", f.dim(), a.cols())?;
        check_dim("A rows vs Y", g.dim(), a.rows())?;
        Ok(Self { f, g, a, b: None })
    }

    /// `min_{x∈X} f(x)` subject to `Ax = b`, as `g(y) = ⟨b, y⟩` over free `Y`.
    pub fn constrained(f: ProxOracle, a: LinearMap, b: RealVector) -> Result<Self> {
        check_dim("A rows vs b", a.rows(), b.len())?;
        let g = ProxOracle::linear(b.clone(), BoxSet::free(b.len()))?;
        let mut p = Self::new(f, g, a)?;
        p.b = Some(b);
        Ok(p)
    }

    pub fn f(&self) -> &ProxOracle {
        &self.f
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

/// Iterate state of one run.
#[derive(Debug, Clone)]
pub struct PdhgState<'a> {
    problem: &'a SaddleProblem,
    mu: f64,
    beta: f64,
    x0: RealVector,
    ytilde0: RealVector,
    x: RealVector,
    xbar: RealVector,
    y: RealVector,
    y_prev: RealVector,
    first_step_sq: f64,
    scheduler: Scheduler,
    averages: AverageAccumulator,
    k: usize,
    halvings: usize,
}

impl<'a> PdhgState<'a> {
    /// Sets `y₀` by the anchored dual prox and fixes `η₁`.
    pub fn initialize(
        problem: &'a SaddleProblem,
        config: &SchedulerConfig,
        opts: &SolveOptions,
    ) -> Result<Self> {
        config.validate()?;
        let x0 = resolve_x0(opts, problem.f.domain())?;
        let ytilde0 = resolve_anchor(opts, problem.a.rows(), problem.is_constrained())?;
        let minus_ax0 = -problem.a.forward(&x0)?;
        let y0 = dual_prox(&problem.g, &minus_ax0, &ytilde0, config.mu_d, 0.0, &ytilde0)?;
        let seed = if config.eta1.is_some() {
            0.0
        } else {
            let probe = unit_probe(problem.a.rows(), opts.seed);
            seed_op_norm(&problem.a, &ytilde0, &y0, &probe)?
        };
        let (eta1, halvings) = choose_eta1(config, seed, |e| {
            let mut trial = Self::build(problem, config, &x0, &ytilde0, &y0, e, 0)?;
            trial.iterate()?;
            Ok(first_curvature(&trial.scheduler))
        })?;
        Self::build(problem, config, &x0, &ytilde0, &y0, eta1, halvings)
    }

    fn build(
        problem: &'a SaddleProblem,
        config: &SchedulerConfig,
        x0: &RealVector,
        ytilde0: &RealVector,
        y0: &RealVector,
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
            y: y0.clone(),
            y_prev: y0.clone(),
            first_step_sq: 0.0,
            scheduler: Scheduler::new(config, Variant::Base, eta1)?,
            averages: AverageAccumulator::new(x0.len(), y0.len(), None),
            k: 0,
            halvings,
        })
    }

    pub fn x(&self) -> &RealVector {
        &self.x
    }

    pub fn xbar(&self) -> &RealVector {
        &self.xbar
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

    pub fn y_hat(&self) -> Option<RealVector> {
        self.averages.y_hat()
    }

    pub fn y_tilde(&self) -> Option<RealVector> {
        self.averages.y_tilde(self.mu)
    }

    /// `δ_x = 24Ĉ_k/(6k+αk(k−3))·(x̄_{k+1} − x₀)` and `δ_y = μ(ỹ₀ − ỹ_k)`: the
    /// linear perturbations under which the averaged gap bound holds on
    /// unbounded domains.
    pub fn unbounded_diagnostics(&self) -> Result<(RealVector, RealVector)> {
        let k = self.k;
        if k < 3 {
            return Err(Error::TooFewIterations(k));
        }
        let s = &self.scheduler;
        // look ahead one primal step: x̄_{k+1} uses x_{k+1}, which only needs y_k and η_{k+1}
        let aty = self.problem.a.adjoint(&self.y)?;
        let x_next = self.problem.f.prox(&aty, &self.xbar, s.eta(k + 1))?;
        let xbar_next = &self.xbar * (1.0 - self.beta) + x_next * self.beta;
        let factor = 24.0 * s.history().combined_max(k) / crate::certify::denominator(k, s.alpha());
        let delta_x = (xbar_next - &self.x0) * factor;
        let delta_y = (&self.ytilde0 - self.y_tilde().expect("k >= 1")) * self.mu;
        log::debug!(
            "unbounded diagnostics at k={k}: |delta_x|={}, |delta_y|={}",
            delta_x.norm(),
            delta_y.norm()
        );
        Ok((delta_x, delta_y))
    }
}

impl PrimalDualMethod for PdhgState<'_> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Pdhg
    }

    fn iterate(&mut self) -> Result<()> {
        let st = self.scheduler.current();
        let t = st.t;
        let p = self.problem;
        let aty = p.a.adjoint(&self.y)?;
        let x = p.f.prox(&aty, &self.xbar, st.eta)?;
        let xbar = if t == 1 {
            self.xbar.clone()
        } else {
            &self.xbar * (1.0 - self.beta) + &x * self.beta
        };
        let minus_ax = -p.a.forward(&x)?;
        let y = dual_prox(&p.g, &minus_ax, &self.ytilde0, self.mu, st.tau, &self.y)?;
        check_finite(&x, t)?;
        check_finite(&y, t)?;
        let l = local_op_norm(&p.a, &y, &self.y)?;
        let next = self.scheduler.advance(l, 0.0)?;
        self.averages.commit(next.eta, &x, &y, &self.y, st.tau, self.mu, None);
        if t == 1 {
            self.first_step_sq = (&x - &self.x0).norm_squared();
        }
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
}

/// Runs the method from scratch until `stop` fires.
pub fn solve(
    problem: &SaddleProblem,
    config: &SchedulerConfig,
    stop: StopRule,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    driver::run(PdhgState::initialize(problem, config, opts)?, stop, opts)
}

/// Measured and certified quantities of a constrained run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedCertificate {
    pub k: usize,
    /// `f(x̂_k) − f(x*)`, when values and `x*` are available.
    pub gap: Option<f64>,
    pub violation: f64,
    /// `μ‖ỹ_k‖`
    pub dual_norm: f64,
    pub gap_bound: Option<f64>,
    pub violation_bound: Option<f64>,
}

impl ConstrainedCertificate {
    /// Combines a run certificate with an optional known solution.
    pub fn assemble(
        cert: &Certificate,
        y_tilde: &RealVector,
        measured_gap: Option<f64>,
        x0: &RealVector,
        x_star: Option<&RealVector>,
        y_star: Option<&RealVector>,
    ) -> Result<Self> {
        let violation = cert
            .violation
            .ok_or_else(|| Error::InvalidConfig("not a constrained problem".into()))?;
        let dist_sq = x_star.map(|xs| (x0 - xs).norm_squared());
        let (gap_bound, violation_bound) = match (dist_sq, cert.k >= 3) {
            (Some(d), true) => (
                Some(cert.optimality_bound(d)?),
                y_star.map(|ys| cert.violation_bound(d, ys.norm())).transpose()?,
            ),
            _ => (None, None),
        };
        Ok(Self {
            k: cert.k,
            gap: measured_gap,
            violation,
            dual_norm: cert.mu_d * y_tilde.norm(),
            gap_bound,
            violation_bound,
        })
    }
}

/// Constrained-mode report for the current state.
pub fn constrained_report(
    state: &PdhgState<'_>,
    opts: &SolveOptions,
    x_star: Option<&RealVector>,
    y_star: Option<&RealVector>,
) -> Result<ConstrainedCertificate> {
    if !state.problem.is_constrained() {
        return Err(Error::InvalidConfig("not a constrained problem".into()));
    }
    let cert = driver::certificate(state, opts)?;
    let xh = state.x_hat().expect("k >= 1");
    let gap = match (x_star, state.problem.f.is_evaluable()) {
        (Some(xs), true) => Some(state.problem.f.value(&xh)? - state.problem.f.value(xs)?),
        _ => None,
    };
    ConstrainedCertificate::assemble(&cert, &state.y_tilde().expect("k >= 1"), gap, &state.x0, x_star, y_star)
}
