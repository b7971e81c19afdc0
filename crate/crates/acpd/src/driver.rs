//! Machinery shared by the four methods: ergodic averages, stopping rules,
//! trace emission and the certificate attached to each run.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::certify;
use crate::error::{Error, Result};
use crate::linalg::RealVector;
use crate::scheduler::{Scheduler, StepHistory};
use crate::trace::TraceRecord;

/// Which method produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ac-pdhg")]
    Pdhg,
    #[serde(rename = "ac-admm")]
    Admm,
    #[serde(rename = "ac-apdhg")]
    Apdhg,
    #[serde(rename = "ac-aadmm")]
    Aadmm,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Pdhg => "ac-pdhg",
            Algorithm::Admm => "ac-admm",
            Algorithm::Apdhg => "ac-apdhg",
            Algorithm::Aadmm => "ac-aadmm",
        }
    }
}

/// `η_{t+1}`-weighted running sums of the iterates.
#[derive(Debug, Clone)]
pub struct AverageAccumulator {
    weight_sum: f64,
    x_num: RealVector,
    y_num: RealVector,
    w_num: Option<RealVector>,
    ytilde_num: RealVector,
}

impl AverageAccumulator {
    pub fn new(n: usize, m: usize, w_dim: Option<usize>) -> Self {
        Self {
            weight_sum: 0.0,
            x_num: RealVector::zeros(n),
            y_num: RealVector::zeros(m),
            w_num: w_dim.map(RealVector::zeros),
            ytilde_num: RealVector::zeros(m),
        }
    }

    /// Adds iterate `t` with weight `η_{t+1}`.
    #[allow(clippy::too_many_arguments)]
    pub fn commit(
        &mut self,
        eta_next: f64,
        x_t: &RealVector,
        y_t: &RealVector,
        y_prev: &RealVector,
        tau_t: f64,
        mu: f64,
        w_t: Option<&RealVector>,
    ) {
        self.weight_sum += eta_next;
        self.x_num.axpy(eta_next, x_t, 1.0);
        self.y_num.axpy(eta_next, y_t, 1.0);
        if let (Some(num), Some(w)) = (self.w_num.as_mut(), w_t) {
            num.axpy(eta_next, w, 1.0);
        }
        self.ytilde_num.axpy(eta_next * (mu + tau_t), y_t, 1.0);
        self.ytilde_num.axpy(-eta_next * tau_t, y_prev, 1.0);
    }

    /// `S_k = Σ_{t=1}^k η_{t+1}`
    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn x_hat(&self) -> Option<RealVector> {
        (self.weight_sum > 0.0).then(|| &self.x_num / self.weight_sum)
    }

    pub fn y_hat(&self) -> Option<RealVector> {
        (self.weight_sum > 0.0).then(|| &self.y_num / self.weight_sum)
    }

    pub fn w_hat(&self) -> Option<RealVector> {
        let num = self.w_num.as_ref()?;
        (self.weight_sum > 0.0).then(|| num / self.weight_sum)
    }

    /// The specially weighted dual average; its weights sum to `μ S_k`.
    pub fn y_tilde(&self, mu: f64) -> Option<RealVector> {
        (self.weight_sum > 0.0).then(|| &self.ytilde_num / (mu * self.weight_sum))
    }
}

/// When a solve ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    MaxIters(usize),
    /// Stop once the bounded-gap bound is at most `eps` (needs both radii).
    GapBound { eps: f64, max_iters: usize },
    /// Stop at the first `k ≥ 3` with `E1 ≤ eps1` and `min{violation, E2} ≤ eps2`.
    ErrorBounds {
        eps1: f64,
        eps2: f64,
        max_iters: usize,
    },
}

impl StopRule {
    pub fn max_iters(&self) -> usize {
        match *self {
            StopRule::MaxIters(k) => k,
            StopRule::GapBound { max_iters, .. } | StopRule::ErrorBounds { max_iters, .. } => {
                max_iters
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    GapBound,
    ErrorBounds,
}

/// Run-level options that are not stepsize hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Primal start; defaults to the projection of the origin onto `X`.
    pub x0: Option<RealVector>,
    /// Dual anchor; defaults to zero and is forced to zero in constrained mode.
    pub ytilde0: Option<RealVector>,
    /// Seed of the unit probe used when the seed norm has no direction.
    pub seed: u64,
    /// `None` picks 1 for runs of at most 1000 iterations, else 10.
    pub trace_stride: Option<usize>,
    pub record_wall_clock: bool,
    /// Diameter of `X` (constrained problems) or `max_x ‖x − x0‖` (saddle problems).
    pub d_x: Option<f64>,
    /// `max_y ‖y − ỹ0‖` for saddle problems with bounded `Y`.
    pub d_y: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            x0: None,
            ytilde0: None,
            seed: 0,
            trace_stride: None,
            record_wall_clock: false,
            d_x: None,
            d_y: None,
        }
    }
}

impl SolveOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_radii(mut self, d_x: Option<f64>, d_y: Option<f64>) -> Self {
        self.d_x = d_x;
        self.d_y = d_y;
        self
    }

    pub fn with_x0(mut self, x0: RealVector) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_trace_stride(mut self, stride: usize) -> Self {
        self.trace_stride = Some(stride);
        self
    }
}

pub(crate) fn unit_probe(dim: usize, seed: u64) -> RealVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = RealVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

/// Certificate quantities at the current iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub k: usize,
    pub mu_d: f64,
    pub beta: f64,
    pub alpha: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// `Σ_{t=1}^k η_{t+1}`
    pub weight_sum: f64,
    /// Combined curvature of iteration 1: `L_1²/μ + Lf_1`.
    pub first_curvature: f64,
    /// Running max `Ĉ_k = max{1/(4(1−β)η₁), L_t²/μ + Lf_t}`.
    pub curvature_max: f64,
    /// `√(μ Ĉ_k)`, the operator-norm running max for non-smooth methods.
    pub op_norm_max: f64,
    /// `‖x_1 − x_0‖²`
    pub first_step_sq: f64,
    pub d_x: Option<f64>,
    pub d_y: Option<f64>,
    pub gap_bound: Option<f64>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub violation: Option<f64>,
    pub identity_residual: Option<f64>,
}

impl Certificate {
    /// Right-hand side of the optimality-gap bound given `‖x0 − x*‖²`.
    pub fn optimality_bound(&self, dist_sq: f64) -> Result<f64> {
        certify::optimality_rhs(self, dist_sq)
    }

    /// Right-hand side of the violation bound given `‖x0 − x*‖²` and `‖y*‖`.
    pub fn violation_bound(&self, dist_sq: f64, y_star_norm: f64) -> Result<f64> {
        certify::violation_rhs(self, dist_sq, y_star_norm)
    }
}

/// The last iterates of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct LastIterates {
    pub x: RealVector,
    pub xbar: RealVector,
    pub y: RealVector,
    pub w: Option<RealVector>,
}

/// Everything a solve returns.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub x_hat: RealVector,
    pub y_hat: RealVector,
    pub w_hat: Option<RealVector>,
    pub y_tilde: RealVector,
    pub last: LastIterates,
    pub x0: RealVector,
    pub ytilde0: RealVector,
    pub line_search_halvings: usize,
    pub steps: StepHistory,
    pub trace: Vec<TraceRecord>,
    pub certificate: Certificate,
    pub gradient_calls: Option<usize>,
}

/// Interface the solve loop needs from a method's state.
pub trait PrimalDualMethod {
    fn algorithm(&self) -> Algorithm;
    /// Runs one iteration.
    fn iterate(&mut self) -> Result<()>;
    /// Completed iterations.
    fn iterations(&self) -> usize;
    fn scheduler(&self) -> &Scheduler;
    fn averages(&self) -> &AverageAccumulator;
    /// `‖x_1 − x_0‖²`, zero before the first iteration.
    fn first_step_sq(&self) -> f64;
    /// Constraint residual of the averaged point in constrained mode.
    fn constraint_residual(&self) -> Result<Option<RealVector>>;
    fn last_iterates(&self) -> LastIterates;
    fn start(&self) -> (RealVector, RealVector);
    fn line_search_halvings(&self) -> usize;
    fn w_residual(&self) -> Option<f64> {
        None
    }
    fn gradient_calls(&self) -> Option<usize> {
        None
    }
}

/// Current certificate of a method's state.
pub fn certificate<M: PrimalDualMethod + ?Sized>(method: &M, opts: &SolveOptions) -> Result<Certificate> {
    let k = method.iterations();
    if k == 0 {
        return Err(Error::TooFewIterations(0));
    }
    let s = method.scheduler();
    let h = s.history();
    let (mu, beta, alpha) = (s.mu(), s.beta(), s.alpha());
    let l1 = h.op_estimates()[0];
    let first_curvature = l1 * l1 / mu + h.smooth_estimates()[0];
    let curvature_max = h.combined_max(k);
    let residual = method.constraint_residual()?;
    let violation = residual.as_ref().map(|r| r.norm());
    let identity_residual = match (&residual, method.averages().y_tilde(mu)) {
        (Some(r), Some(yt)) => Some((r - yt * mu).norm()),
        _ => None,
    };
    let mut cert = Certificate {
        k,
        mu_d: mu,
        beta,
        alpha,
        eta1: s.eta(1),
        eta2: s.eta(2),
        weight_sum: method.averages().weight_sum(),
        first_curvature,
        curvature_max,
        op_norm_max: (mu * curvature_max).sqrt(),
        first_step_sq: method.first_step_sq(),
        d_x: opts.d_x,
        d_y: opts.d_y,
        gap_bound: None,
        e1: None,
        e2: None,
        violation,
        identity_residual,
    };
    if k >= 3 {
        if let (Some(dx), Some(dy)) = (opts.d_x, opts.d_y) {
            cert.gap_bound = Some(certify::bounded_gap_bound(&cert, dx, dy)?);
        }
        if let (Some(dx), true) = (opts.d_x, residual.is_some()) {
            let (e1, e2) = certify::error_bounds_from_curvature(k, curvature_max, mu, beta, alpha, dx)?;
            cert.e1 = Some(e1);
            cert.e2 = Some(e2);
        }
    }
    Ok(cert)
}

fn trace_record<M: PrimalDualMethod + ?Sized>(
    method: &M,
    cert: &Certificate,
    wall_ns: u64,
) -> TraceRecord {
    let s = method.scheduler();
    let k = method.iterations();
    let accel = s.tilde_tau(k).is_some();
    TraceRecord {
        t: k,
        eta_t: s.eta(k),
        tau_t: s.tau(k),
        tilde_tau_t: s.tilde_tau(k),
        l_op_t: s.history().op_estimates()[k - 1],
        l_smooth_t: accel.then(|| s.history().smooth_estimates()[k - 1]),
        bound: cert.gap_bound.or(cert.e1),
        violation: cert.violation,
        identity_residual: cert.identity_residual,
        w_residual: method.w_residual(),
        grad_calls: method.gradient_calls(),
        wall_ns,
    }
}

/// Runs `method` until `stop` fires and assembles the report.
pub fn run<M: PrimalDualMethod>(mut method: M, stop: StopRule, opts: &SolveOptions) -> Result<SolveReport> {
    let max_iters = stop.max_iters();
    if max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
    }
    match stop {
        StopRule::GapBound { .. } if opts.d_x.is_none() || opts.d_y.is_none() => {
            return Err(Error::InvalidConfig("gap-bound stopping needs d_x and d_y".into()));
        }
        StopRule::ErrorBounds { .. } if opts.d_x.is_none() => {
            return Err(Error::InvalidConfig("error-bound stopping needs d_x".into()));
        }
        _ => {}
    }
    let stride = opts
        .trace_stride
        .unwrap_or(if max_iters <= 1000 { 1 } else { 10 })
        .max(1);
    let clock = Instant::now();
    let mut trace = Vec::new();
    let mut reason = StopReason::MaxIters;
    loop {
        // overflow shows up first as a non-finite curvature estimate
        method.iterate().map_err(|e| match e {
            Error::NonFinite(_) => Error::Divergence {
                iteration: method.iterations() + 1,
            },
            e => e,
        })?;
        let k = method.iterations();
        let cert = certificate(&method, opts)?;
        let hit = match stop {
            StopRule::MaxIters(_) => None,
            StopRule::GapBound { eps, .. } => {
                cert.gap_bound.filter(|b| *b <= eps).map(|_| StopReason::GapBound)
            }
            StopRule::ErrorBounds { eps1, eps2, .. } => match (cert.e1, cert.e2, cert.violation) {
                (Some(e1), Some(e2), Some(v)) if e1 <= eps1 && v.min(e2) <= eps2 => {
                    Some(StopReason::ErrorBounds)
                }
                _ => None,
            },
        };
        let last = hit.is_some() || k >= max_iters;
        if k % stride == 0 || last {
            let wall = if opts.record_wall_clock {
                clock.elapsed().as_nanos() as u64
            } else {
                0
            };
            trace.push(trace_record(&method, &cert, wall));
        }
        if let Some(r) = hit {
            reason = r;
        }
        if last {
            return finish(method, cert, reason, trace);
        }
    }
}

fn finish<M: PrimalDualMethod>(
    method: M,
    certificate: Certificate,
    stop_reason: StopReason,
    trace: Vec<TraceRecord>,
) -> Result<SolveReport> {
    let avg = method.averages();
    let mu = method.scheduler().mu();
    let (x0, ytilde0) = method.start();
    Ok(SolveReport {
        algorithm: method.algorithm(),
        iterations: method.iterations(),
        stop_reason,
        x_hat: avg.x_hat().expect("at least one iteration"),
        y_hat: avg.y_hat().expect("at least one iteration"),
        w_hat: avg.w_hat(),
        y_tilde: avg.y_tilde(mu).expect("at least one iteration"),
        last: method.last_iterates(),
        x0,
        ytilde0,
        line_search_halvings: method.line_search_halvings(),
        steps: method.scheduler().step_history(),
        trace,
        certificate,
        gradient_calls: method.gradient_calls(),
    })
}

/// Picks `η₁`: user value or seed formula, then the optional halving search.
///
/// `trial(η₁)` must run the first iteration under `η₁` and return its combined
/// curvature `L_1²/μ + Lf_1`.
pub(crate) fn choose_eta1<F>(
    config: &crate::scheduler::SchedulerConfig,
    seed_norm: f64,
    trial: F,
) -> Result<(f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let eta1 = crate::scheduler::init_eta1(config, seed_norm)?;
    if !config.initial_line_search {
        return Ok((eta1, 0));
    }
    let out = crate::scheduler::initial_line_search(eta1, trial)?;
    log::info!("initial line search: eta1={} after {} halvings", out.eta1, out.halvings);
    Ok((out.eta1, out.halvings))
}

/// Combined curvature of the first iteration recorded by `s`.
pub(crate) fn first_curvature(s: &Scheduler) -> f64 {
    let h = s.history();
    let l = h.op_estimates()[0];
    l * l / s.mu() + h.smooth_estimates()[0]
}

pub(crate) fn check_finite(v: &RealVector, iteration: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { iteration })
    }
}

/// Resolves the start point inside `domain`.
pub(crate) fn resolve_x0(
    opts: &SolveOptions,
    domain: &crate::linalg::BoxSet,
) -> Result<RealVector> {
    match &opts.x0 {
        Some(x0) => {
            crate::error::check_dim("x0", domain.dim(), x0.len())?;
            crate::linalg::ensure_finite(x0, "x0")?;
            if !domain.contains(x0, 0.0) {
                return Err(Error::InvalidConfig("x0 lies outside X".into()));
            }
            Ok(x0.clone())
        }
        None => Ok(domain.project(&RealVector::zeros(domain.dim()))),
    }
}

/// Resolves the dual anchor; constrained problems always use zero.
pub(crate) fn resolve_anchor(opts: &SolveOptions, m: usize, constrained: bool) -> Result<RealVector> {
    match &opts.ytilde0 {
        Some(y) if constrained => {
            if y.iter().any(|v| *v != 0.0) {
                log::warn!("constrained mode requires a zero dual anchor; ignoring the supplied one");
            }
            Ok(RealVector::zeros(m))
        }
        Some(y) => {
            crate::error::check_dim("ytilde0", m, y.len())?;
            crate::linalg::ensure_finite(y, "ytilde0")?;
            Ok(y.clone())
        }
        None => Ok(RealVector::zeros(m)),
    }
}
