//! Stepsize state machines driven by local curvature estimates, and an auditor
//! that re-checks the stepsize conditions on a finished run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::CurvatureHistory;

/// Largest admissible `β`: `1 − √6/3`.
pub fn beta_max() -> f64 {
    1.0 - 6f64.sqrt() / 3.0
}

/// Hyper-parameters shared by all four methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub mu_d: f64,
    #[serde(default = "beta_max")]
    pub beta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub eta1: Option<f64>,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default)]
    pub initial_line_search: bool,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_zeta() -> f64 {
    1.0
}

impl SchedulerConfig {
    /// Defaults: `β = 1 − √6/3`, `α = 0.5`, `ζ = 1`, seeded `η₁`.
    pub fn new(mu_d: f64) -> Self {
        Self {
            mu_d,
            beta: beta_max(),
            alpha: default_alpha(),
            eta1: None,
            zeta: default_zeta(),
            initial_line_search: false,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_eta1(mut self, eta1: f64) -> Self {
        self.eta1 = Some(eta1);
        self
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self
    }

    pub fn with_line_search(mut self, on: bool) -> Self {
        self.initial_line_search = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.mu_d > 0.0 && self.mu_d.is_finite()) {
            return bad(format!("mu_d must be positive, got {}", self.mu_d));
        }
        if !(self.beta > 0.0 && self.beta <= beta_max() + 1e-15) {
            return bad(format!("beta out of range (0, 1-sqrt(6)/3], got {}", self.beta));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha out of range (0, 1], got {}", self.alpha));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return bad(format!("zeta must be positive, got {}", self.zeta));
        }
        if let Some(e) = self.eta1 {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("eta1 must be positive, got {e}"));
            }
        }
        Ok(())
    }
}

/// First stepsize: the user value if given, else `ζμ/(4(1−β)L₀²)`.
pub fn init_eta1(config: &SchedulerConfig, seed_norm: f64) -> Result<f64> {
    if let Some(e) = config.eta1 {
        return Ok(e);
    }
    if seed_norm > 0.0 && seed_norm.is_finite() {
        Ok(config.zeta * config.mu_d / (4.0 * (1.0 - config.beta) * seed_norm * seed_norm))
    } else {
        Err(Error::MissingStepsize)
    }
}

/// Which recursion the scheduler runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Operator curvature only (PDHG and ADMM).
    Base,
    /// Operator plus smooth-part curvature, with `τ̃ = τ/μ`.
    Accelerated,
}

/// Stepsizes in force for iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub t: usize,
    pub eta: f64,
    pub tau: f64,
    pub tilde_tau: Option<f64>,
}

/// Stepsize state for one run.
///
/// Holds `η_1..η_{t}`, `τ_1..τ_{t}` and the curvature estimates of iterations
/// `1..t−1`. Each call to [`Scheduler::advance`] records the estimates of the
/// iteration that just finished and produces the stepsizes of the next one.
#[derive(Debug, Clone)]
pub struct Scheduler {
    variant: Variant,
    mu: f64,
    beta: f64,
    alpha: f64,
    eta: Vec<f64>,
    tau: Vec<f64>,
    history: CurvatureHistory,
}

impl Scheduler {
    pub fn new(config: &SchedulerConfig, variant: Variant, eta1: f64) -> Result<Self> {
        config.validate()?;
        if !(eta1 > 0.0 && eta1.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta1 must be positive, got {eta1}")));
        }
        Ok(Self {
            variant,
            mu: config.mu_d,
            beta: config.beta,
            alpha: config.alpha,
            eta: vec![eta1],
            tau: vec![0.0],
            history: CurvatureHistory::new(config.mu_d, config.beta, eta1),
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Index of the iteration whose stepsizes are available next.
    pub fn t(&self) -> usize {
        self.eta.len()
    }

    /// `η_t` (1-based).
    pub fn eta(&self, t: usize) -> f64 {
        self.eta[t - 1]
    }

    /// `τ_t` (1-based).
    pub fn tau(&self, t: usize) -> f64 {
        self.tau[t - 1]
    }

    pub fn tilde_tau(&self, t: usize) -> Option<f64> {
        match self.variant {
            Variant::Base => None,
            Variant::Accelerated => Some(self.tau[t - 1] / self.mu),
        }
    }

    pub fn current(&self) -> StepSizes {
        self.step(self.t())
    }

    pub fn step(&self, t: usize) -> StepSizes {
        StepSizes {
            t,
            eta: self.eta(t),
            tau: self.tau(t),
            tilde_tau: self.tilde_tau(t),
        }
    }

    pub fn history(&self) -> &CurvatureHistory {
        &self.history
    }

    /// Records `(L_t, Lf_t)` from the finished iteration `t` and returns the
    /// stepsizes of iteration `t + 1`.
    pub fn advance(&mut self, l_op: f64, l_smooth: f64) -> Result<StepSizes> {
        if !(l_op >= 0.0 && l_op.is_finite() && l_smooth >= 0.0 && l_smooth.is_finite()) {
            return Err(Error::NonFinite("curvature estimate"));
        }
        if self.variant == Variant::Base && l_smooth != 0.0 {
            return Err(Error::InvalidConfig(
                "base scheduler received a smooth-part estimate".into(),
            ));
        }
        let t = self.t();
        self.history.push(l_op, l_smooth);
        // q = 4L² + 4μLf; zero means the curvature cap is absent from the min
        let q = 4.0 * l_op * l_op + 4.0 * self.mu * l_smooth;
        let eta_t = self.eta(t);
        let tau_t = self.tau(t);
        let (eta_next, tau_next) = if t == 1 {
            let mut e = (1.0 - self.beta) * eta_t;
            if q > 0.0 {
                e = e.min(self.mu / q);
            }
            (e, self.mu)
        } else {
            let tau_prev = self.tau(t - 1);
            let mut e = (4.0 / 3.0 * eta_t).min((tau_prev + self.mu) / tau_t * eta_t);
            if q > 0.0 {
                e = e.min(tau_t / q);
            }
            let tau = tau_t + 0.5 * self.mu * (self.alpha + (1.0 - self.alpha) * e * q / tau_t);
            (e, tau)
        };
        self.eta.push(eta_next);
        self.tau.push(tau_next);
        debug_assert!(
            self.invariants_hold(t + 1).is_ok(),
            "scheduler invariant broken at t={}: {:?}",
            t + 1,
            self.invariants_hold(t + 1)
        );
        Ok(self.current())
    }

    fn invariants_hold(&self, t: usize) -> std::result::Result<(), &'static str> {
        let tau = self.tau(t);
        if tau > t as f64 * self.mu / 2.0 * (1.0 + 1e-12) {
            return Err("tau_t <= t mu/2");
        }
        // the difference of two O(τ) numbers carries O(ε τ) rounding
        let step = tau - self.tau(t - 1);
        let slack = 4.0 * f64::EPSILON * tau;
        if t > 2 && !(step >= -slack && step <= self.mu / 2.0 * (1.0 + 1e-12) + slack) {
            return Err("0 <= tau_t - tau_{t-1} <= mu/2");
        }
        let floor = 3.0 + self.alpha * (t as f64 - 3.0);
        if self.eta(t) * 12.0 * self.history.combined_max(t - 1) < floor * (1.0 - 1e-12) - 1e-9 {
            return Err("eta_t >= (3 + alpha(t-3))/(12 C_{t-1})");
        }
        Ok(())
    }

    /// Snapshot for [`audit_conditions`].
    pub fn step_history(&self) -> StepHistory {
        StepHistory {
            variant: self.variant,
            mu: self.mu,
            beta: self.beta,
            alpha: self.alpha,
            eta: self.eta.clone(),
            tau: self.tau.clone(),
            tilde_tau: match self.variant {
                Variant::Base => None,
                Variant::Accelerated => Some(self.tau.iter().map(|t| t / self.mu).collect()),
            },
            l_op: self.history.op_estimates().to_vec(),
            l_smooth: self.history.smooth_estimates().to_vec(),
        }
    }
}

/// Complete stepsize record of a run. Index `i` holds iteration `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepHistory {
    pub variant: Variant,
    pub mu: f64,
    pub beta: f64,
    pub alpha: f64,
    pub eta: Vec<f64>,
    pub tau: Vec<f64>,
    pub tilde_tau: Option<Vec<f64>>,
    pub l_op: Vec<f64>,
    pub l_smooth: Vec<f64>,
}

/// One failed inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: usize,
    pub condition: String,
    /// Relative slack `(rhs − lhs)/|rhs|`; negative means violated.
    pub slack: f64,
}

const AUDIT_TOL: f64 = 1e-12;

/// Checks the stepsize conditions that the convergence analysis relies on, plus
/// the concrete policy pins (`τ₂ = μ`, `τ̃ = τ/μ`).
pub fn audit_conditions(h: &StepHistory) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check_le = |t: usize, name: &str, lhs: f64, rhs: f64| {
        let slack = (rhs - lhs) / rhs.abs().max(f64::MIN_POSITIVE);
        if !(slack >= -AUDIT_TOL) {
            out.push(Violation {
                t,
                condition: format!("{name} at t={t}"),
                slack,
            });
        }
    };
    let accel = h.variant == Variant::Accelerated;
    let n = h.eta.len();
    if h.tau.first().copied() != Some(0.0) {
        check_le(1, "tau_1 = 0", h.tau.first().copied().unwrap_or(f64::NAN).abs(), 0.0);
    }
    if !(h.beta > 0.0) {
        check_le(1, "beta > 0", -h.beta, 0.0);
    }
    if accel {
        let tt = h.tilde_tau.as_deref().unwrap_or(&[]);
        if tt.first().copied() != Some(0.0) {
            check_le(1, "tilde_tau_1 = 0", tt.first().copied().unwrap_or(f64::NAN).abs(), 0.0);
        }
        for t in 1..=tt.len().min(h.tau.len()) {
            let want = h.tau[t - 1] / h.mu;
            check_le(t, "tilde_tau_t = tau_t / mu_d", (tt[t - 1] - want).abs(), 1e-15 * want);
        }
    }
    let tilde = |t: usize| -> f64 {
        h.tilde_tau
            .as_ref()
            .map_or(h.tau[t - 1] / h.mu, |v| v[t - 1])
    };
    let lf = |t: usize| -> f64 { h.l_smooth.get(t - 1).copied().unwrap_or(0.0) };
    if n >= 2 {
        check_le(2, "eta_2 <= (1-beta) eta_1", h.eta[1], (1.0 - h.beta) * h.eta[0]);
        let l1 = h.l_op[0];
        let cap = if accel {
            4.0 * l1 * l1 / h.mu + 4.0 * lf(1)
        } else {
            4.0 * l1 * l1 / h.mu
        };
        if cap > 0.0 {
            let name = if accel {
                "eta_2 <= 1/(4 L_1^2/mu_d + 4 Lf_1)"
            } else {
                "eta_2 <= mu_d/(4 L_1^2)"
            };
            check_le(2, name, h.eta[1], 1.0 / cap);
        }
        if h.tau[1] != h.mu {
            check_le(2, "tau_2 = mu_d", (h.tau[1] - h.mu).abs(), 0.0);
        }
    }
    for t in 3..=n {
        let (e, ep) = (h.eta[t - 1], h.eta[t - 2]);
        let (tp, tpp) = (h.tau[t - 2], h.tau[t - 3]);
        check_le(t, "eta_t <= 2(1-beta)^2 eta_{t-1}", e, 2.0 * (1.0 - h.beta).powi(2) * ep);
        check_le(t, "eta_t <= (tau_{t-2}+mu_d)/tau_{t-1} eta_{t-1}", e, (tpp + h.mu) / tp * ep);
        let l = h.l_op[t - 2];
        if accel {
            check_le(
                t,
                "eta_t <= (tilde_tau_{t-2}+1)/tilde_tau_{t-1} eta_{t-1}",
                e,
                (tilde(t - 2) + 1.0) / tilde(t - 1) * ep,
            );
            let denom = 4.0 * l * l / tp + 4.0 * lf(t - 1) / tilde(t - 1);
            if denom > 0.0 {
                check_le(
                    t,
                    "eta_t <= 1/(4 L_{t-1}^2/tau_{t-1} + 4 Lf_{t-1}/tilde_tau_{t-1})",
                    e,
                    1.0 / denom,
                );
            }
        } else if l > 0.0 {
            check_le(t, "eta_t <= tau_{t-1}/(4 L_{t-1}^2)", e, tp / (4.0 * l * l));
        }
    }
    out
}

/// Result of [`initial_line_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub eta1: f64,
    pub halvings: usize,
}

pub const MAX_HALVINGS: usize = 200;

/// Halves `η₁` until `η₁ ≤ 2/(5 C₁)`, where `first_curvature(η₁)` runs the first
/// iteration under `η₁` and returns `C₁ = L₁²/μ + Lf₁`.
pub fn initial_line_search<F>(eta_start: f64, mut first_curvature: F) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut eta1 = eta_start;
    for halvings in 0..=MAX_HALVINGS {
        let c1 = first_curvature(eta1)?;
        if c1 == 0.0 || eta1 <= 2.0 / (5.0 * c1) {
            log::debug!("initial line search accepted eta1={eta1} after {halvings} halvings");
            return Ok(LineSearchOutcome { eta1, halvings });
        }
        eta1 *= 0.5;
    }
    Err(Error::LineSearchExhausted(MAX_HALVINGS))
}
