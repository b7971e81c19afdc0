//! Function oracles: prox-friendly terms, smooth terms with gradients, and the
//! quadratic-penalty subproblem used by the ADMM variants.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{BoxSet, LinearMap, RealVector};

/// Separable closed-form kinds supported by [`ProxOracle`].
#[derive(Debug, Clone, PartialEq)]
pub enum ProxKind {
    /// `0`
    Zero,
    /// `⟨c, x⟩`
    Linear(RealVector),
    /// `λ‖x‖₁`
    L1 { lambda: f64 },
    /// `½ Σ p_i x_i² + ⟨q, x⟩` with `p ≥ 0`
    Quadratic { diag: RealVector, linear: RealVector },
    /// Indicator of the domain only. Same values as `Zero`.
    Indicator,
}

/// A prox-friendly convex function restricted to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxOracle {
    domain: BoxSet,
    kind: ProxKind,
    evaluable: bool,
}

/// Minimizer of `a y + ½ p y² + λ|y|` shifted by a prox center, on one interval.
#[inline]
fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl ProxOracle {
    pub fn new(kind: ProxKind, domain: BoxSet) -> Result<Self> {
        let n = domain.dim();
        match &kind {
            ProxKind::Linear(c) => check_dim("linear term", n, c.len())?,
            ProxKind::L1 { lambda } => {
                if !(*lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::InvalidConfig(format!("l1 weight must be >= 0, got {lambda}")));
                }
            }
            ProxKind::Quadratic { diag, linear } => {
                check_dim("quadratic diagonal", n, diag.len())?;
                check_dim("quadratic linear term", n, linear.len())?;
                if diag.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(Error::InvalidConfig("quadratic diagonal must be >= 0".into()));
                }
            }
            ProxKind::Zero | ProxKind::Indicator => {}
        }
        Ok(Self {
            domain,
            kind,
            evaluable: true,
        })
    }

    pub fn zero(domain: BoxSet) -> Self {
        Self {
            domain,
            kind: ProxKind::Zero,
            evaluable: true,
        }
    }

    pub fn indicator(domain: BoxSet) -> Self {
        Self {
            domain,
            kind: ProxKind::Indicator,
            evaluable: true,
        }
    }

    pub fn linear(c: RealVector, domain: BoxSet) -> Result<Self> {
        Self::new(ProxKind::Linear(c), domain)
    }

    pub fn l1(lambda: f64, domain: BoxSet) -> Result<Self> {
        Self::new(ProxKind::L1 { lambda }, domain)
    }

    pub fn quadratic(diag: RealVector, linear: RealVector, domain: BoxSet) -> Result<Self> {
        Self::new(ProxKind::Quadratic { diag, linear }, domain)
    }

    /// `½xᵀPx + qᵀx`; only diagonal `P` has a closed-form prox here.
    pub fn quadratic_matrix(p: &DMatrix<f64>, q: RealVector, domain: BoxSet) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n {
            return Err(Error::InvalidConfig("quadratic matrix must be square".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && p[(i, j)] != 0.0 {
                    return Err(Error::OracleUnavailable(
                        "closed-form prox needs a diagonal quadratic".into(),
                    ));
                }
            }
        }
        Self::quadratic(p.diagonal(), q, domain)
    }

    /// Same oracle, but `value` reports `NotEvaluable`.
    pub fn without_values(mut self) -> Self {
        self.evaluable = false;
        self
    }

    pub fn domain(&self) -> &BoxSet {
        &self.domain
    }

    pub fn kind(&self) -> &ProxKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn is_evaluable(&self) -> bool {
        self.evaluable
    }

    /// Unconstrained minimizer of `η(ξ y + h_i(y)) + ½(c − y)²` for coordinate `i`.
    #[inline]
    fn coord_unconstrained(&self, i: usize, xi: f64, c: f64, eta: f64) -> f64 {
        match &self.kind {
            ProxKind::Zero | ProxKind::Indicator => c - eta * xi,
            ProxKind::Linear(lin) => c - eta * (xi + lin[i]),
            ProxKind::L1 { lambda } => soft(c - eta * xi, eta * lambda),
            ProxKind::Quadratic { diag, linear } => {
                (c - eta * (xi + linear[i])) / (1.0 + eta * diag[i])
            }
        }
    }

    /// `argmin_{x in domain} η(⟨linear, x⟩ + f(x)) + ½‖center − x‖²`
    pub fn prox(&self, linear: &RealVector, center: &RealVector, eta: f64) -> Result<RealVector> {
        check_dim("prox linear term", self.dim(), linear.len())?;
        check_dim("prox center", self.dim(), center.len())?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("prox stepsize must be > 0, got {eta}")));
        }
        Ok(RealVector::from_fn(self.dim(), |i, _| {
            // one-dimensional convex problem: clamping the free minimizer is exact
            self.domain
                .clamp_coord(i, self.coord_unconstrained(i, linear[i], center[i], eta))
        }))
    }

    /// Value of coordinate `i`'s term, ignoring the domain.
    #[inline]
    pub fn coord_value(&self, i: usize, x: f64) -> f64 {
        match &self.kind {
            ProxKind::Zero | ProxKind::Indicator => 0.0,
            ProxKind::Linear(c) => c[i] * x,
            ProxKind::L1 { lambda } => lambda * x.abs(),
            ProxKind::Quadratic { diag, linear } => 0.5 * diag[i] * x * x + linear[i] * x,
        }
    }

    /// Function value, not including the domain indicator.
    pub fn value(&self, x: &RealVector) -> Result<f64> {
        if !self.evaluable {
            return Err(Error::NotEvaluable);
        }
        check_dim("oracle value", self.dim(), x.len())?;
        Ok((0..x.len()).map(|i| self.coord_value(i, x[i])).sum())
    }

    /// `max_{x in domain} a x − h_i(x)` for coordinate `i`, or `None` if unbounded.
    pub fn coord_conjugate_on_box(&self, i: usize, a: f64) -> Option<f64> {
        let (l, u) = (self.domain.lower()[i], self.domain.upper()[i]);
        let obj = |x: f64| a * x - self.coord_value(i, x);
        let mut cands: Vec<f64> = Vec::with_capacity(3);
        match &self.kind {
            ProxKind::Quadratic { diag, linear } if diag[i] > 0.0 => {
                cands.push(((a - linear[i]) / diag[i]).max(l).min(u));
            }
            _ => {
                // piecewise linear: optimum at an endpoint or at the kink 0
                let slope_right = match &self.kind {
                    ProxKind::Zero | ProxKind::Indicator => a,
                    ProxKind::Linear(c) => a - c[i],
                    ProxKind::L1 { lambda } => a - lambda,
                    ProxKind::Quadratic { linear, .. } => a - linear[i],
                };
                let slope_left = match &self.kind {
                    ProxKind::L1 { lambda } => a + lambda,
                    _ => slope_right,
                };
                if (u == f64::INFINITY && slope_right > 0.0)
                    || (l == f64::NEG_INFINITY && slope_left < 0.0)
                {
                    return None;
                }
                if l.is_finite() {
                    cands.push(l);
                }
                if u.is_finite() {
                    cands.push(u);
                }
                if l <= 0.0 && 0.0 <= u {
                    cands.push(0.0);
                }
                if cands.is_empty() {
                    // free coordinate with zero slopes
                    cands.push(0.0);
                }
            }
        }
        cands.into_iter().map(obj).reduce(f64::max)
    }

    /// The oracle for `w ↦ h(c w)` on `domain / c`.
    pub fn scaled_input(&self, c: f64) -> Result<Self> {
        let domain = self.domain.shrunk_by(c)?;
        let kind = match &self.kind {
            ProxKind::Zero => ProxKind::Zero,
            ProxKind::Indicator => ProxKind::Indicator,
            ProxKind::Linear(v) => ProxKind::Linear(v * c),
            ProxKind::L1 { lambda } => ProxKind::L1 { lambda: lambda * c },
            ProxKind::Quadratic { diag, linear } => ProxKind::Quadratic {
                diag: diag * (c * c),
                linear: linear * c,
            },
        };
        Ok(Self {
            domain,
            kind,
            evaluable: self.evaluable,
        })
    }
}

/// `argmin_{y in Y} ⟨minus_ax, y⟩ + g(y) + μ/2‖anchor − y‖² + τ/2‖y_prev − y‖²`
///
/// Both quadratics merge into one with weight `μ + τ` and center
/// `(μ·anchor + τ·y_prev)/(μ + τ)`.
pub fn dual_prox(
    g: &ProxOracle,
    minus_ax: &RealVector,
    anchor: &RealVector,
    mu: f64,
    tau: f64,
    y_prev: &RealVector,
) -> Result<RealVector> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidConfig(format!("mu_d must be > 0, got {mu}")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("tau must be >= 0, got {tau}")));
    }
    check_dim("dual prox anchor", g.dim(), anchor.len())?;
    check_dim("dual prox previous iterate", g.dim(), y_prev.len())?;
    let weight = mu + tau;
    let center = if tau == 0.0 {
        anchor.clone()
    } else {
        RealVector::from_fn(anchor.len(), |i, _| (mu * anchor[i] + tau * y_prev[i]) / weight)
    };
    g.prox(minus_ax, &center, 1.0 / weight)
}

/// User-supplied smooth function.
#[derive(Clone)]
pub struct CustomSmooth {
    pub dim: usize,
    pub value: Option<Arc<dyn Fn(&RealVector) -> f64 + Send + Sync>>,
    pub grad: Arc<dyn Fn(&RealVector) -> RealVector + Send + Sync>,
}

impl fmt::Debug for CustomSmooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSmooth")
            .field("dim", &self.dim)
            .field("evaluable", &self.value.is_some())
            .finish()
    }
}

/// A convex function with Lipschitz gradient.
#[derive(Debug, Clone)]
pub enum SmoothOracle {
    /// `½xᵀPx + qᵀx`, `P` symmetric positive semidefinite
    Quadratic { p: DMatrix<f64>, q: RealVector },
    /// `(1/N) Σ log(1 + exp(−l_i ⟨a_i, x⟩))`, rows of `features` are the `a_i`
    Logistic {
        features: DMatrix<f64>,
        labels: RealVector,
    },
    Custom(CustomSmooth),
}

/// `log(1 + e^z)` without overflow.
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + e^{−z})`
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SmoothOracle {
    pub fn quadratic(p: DMatrix<f64>, q: RealVector) -> Result<Self> {
        let n = q.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "smooth quadratic",
                expected: n,
                got: p.nrows(),
            });
        }
        if (&p - p.transpose()).amax() > 1e-12 * (1.0 + p.amax()) {
            return Err(Error::InvalidConfig("quadratic matrix must be symmetric".into()));
        }
        Ok(SmoothOracle::Quadratic { p, q })
    }

    /// `⟨c, x⟩`
    pub fn linear(c: RealVector) -> Self {
        let n = c.len();
        SmoothOracle::Quadratic {
            p: DMatrix::zeros(n, n),
            q: c,
        }
    }

    pub fn logistic(features: DMatrix<f64>, labels: RealVector) -> Result<Self> {
        check_dim("logistic labels", features.nrows(), labels.len())?;
        if features.nrows() == 0 {
            return Err(Error::InvalidConfig("logistic loss needs samples".into()));
        }
        Ok(SmoothOracle::Logistic { features, labels })
    }

    pub fn dim(&self) -> usize {
        match self {
            SmoothOracle::Quadratic { q, .. } => q.len(),
            SmoothOracle::Logistic { features, .. } => features.ncols(),
            SmoothOracle::Custom(c) => c.dim,
        }
    }

    pub fn is_evaluable(&self) -> bool {
        !matches!(self, SmoothOracle::Custom(CustomSmooth { value: None, .. }))
    }

    /// Value and gradient at `x`.
    pub fn gradient(&self, x: &RealVector) -> Result<(f64, RealVector)> {
        check_dim("smooth gradient", self.dim(), x.len())?;
        match self {
            SmoothOracle::Quadratic { p, q } => {
                let px = p * x;
                let value = 0.5 * x.dot(&px) + q.dot(x);
                Ok((value, px + q))
            }
            SmoothOracle::Logistic { features, labels } => {
                let nsamp = features.nrows() as f64;
                let margins = features * x;
                let mut value = 0.0;
                let mut weights = RealVector::zeros(margins.len());
                for i in 0..margins.len() {
                    let z = -labels[i] * margins[i];
                    value += log1p_exp(z);
                    weights[i] = -labels[i] * sigmoid(z) / nsamp;
                }
                Ok((value / nsamp, features.tr_mul(&weights)))
            }
            SmoothOracle::Custom(c) => {
                let value = c.value.as_ref().ok_or(Error::NotEvaluable)?(x);
                Ok((value, (c.grad)(x)))
            }
        }
    }

    pub fn value(&self, x: &RealVector) -> Result<f64> {
        check_dim("smooth value", self.dim(), x.len())?;
        match self {
            SmoothOracle::Custom(c) => Ok(c.value.as_ref().ok_or(Error::NotEvaluable)?(x)),
            _ => Ok(self.gradient(x)?.0),
        }
    }

    /// Diagonal of `P` when the oracle is a quadratic with diagonal Hessian.
    pub fn diagonal_quadratic(&self) -> Option<(RealVector, RealVector)> {
        match self {
            SmoothOracle::Quadratic { p, q } => {
                let n = q.len();
                let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || p[(i, j)] == 0.0));
                diagonal.then(|| (p.diagonal(), q.clone()))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Strategy {
    /// `B = cI`: one prox of `G`
    ScaledIdentity(f64),
    /// Free domain, `G` zero/linear/diagonal quadratic: normal equations
    Normal {
        gram: DMatrix<f64>,
        base: Option<Cholesky<f64, Dyn>>,
    },
    /// Accelerated proximal gradient on the subproblem
    Iterative { gram: DMatrix<f64> },
}

/// Solves `argmin_{w in W} G(w) + 1/(2ρ)‖Bw − target‖²` for varying `ρ`.
#[derive(Debug, Clone)]
pub struct AugmentedOracle {
    g: ProxOracle,
    b: LinearMap,
    strategy: Strategy,
    gram_norm: f64,
}

const ITERATIVE_MAX_STEPS: usize = 500_000;

impl AugmentedOracle {
    pub fn new(g: ProxOracle, b: LinearMap) -> Result<Self> {
        check_dim("augmented oracle B columns", g.dim(), b.cols())?;
        if let Some(c) = b.as_scaled_identity() {
            if c != 0.0 {
                return Ok(Self {
                    g,
                    b,
                    strategy: Strategy::ScaledIdentity(c),
                    gram_norm: c * c,
                });
            }
        }
        let bd = b.to_dense();
        let gram = bd.tr_mul(&bd);
        let gram_norm = SymmetricEigen::new(gram.clone())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |a, v| a.max(*v));
        let diag = match g.kind() {
            ProxKind::Zero | ProxKind::Indicator | ProxKind::Linear(_) => {
                Some(RealVector::zeros(g.dim()))
            }
            ProxKind::Quadratic { diag, .. } => Some(diag.clone()),
            ProxKind::L1 { .. } => None,
        };
        let strategy = match diag {
            Some(d) if g.domain().is_free() => {
                let curvature_free = d.iter().all(|p| *p == 0.0);
                let probe = &gram + DMatrix::from_diagonal(&d);
                let Some(chol) = Cholesky::new(probe) else {
                    return Err(Error::OracleUnavailable(
                        "augmented subproblem is not strongly convex: BᵀB is singular on \
                         directions where G has no curvature"
                            .into(),
                    ));
                };
                Strategy::Normal {
                    gram,
                    base: curvature_free.then_some(chol),
                }
            }
            _ => {
                if gram_norm == 0.0 {
                    return Err(Error::OracleUnavailable("B is the zero map".into()));
                }
                Strategy::Iterative { gram }
            }
        };
        Ok(Self {
            g,
            b,
            strategy,
            gram_norm,
        })
    }

    pub fn g(&self) -> &ProxOracle {
        &self.g
    }

    pub fn b(&self) -> &LinearMap {
        &self.b
    }

    pub fn strategy_name(&self) -> &'static str {
        match self.strategy {
            Strategy::ScaledIdentity(_) => "scaled-identity",
            Strategy::Normal { .. } => "normal-equations",
            Strategy::Iterative { .. } => "iterative",
        }
    }

    /// The oracle for `w ↦ G(cw)` with map `cB` on `W / c`.
    pub fn scaled_input(&self, c: f64) -> Result<Self> {
        Self::new(self.g.scaled_input(c)?, self.b.clone().scaled(c))
    }

    pub fn solve(&self, rho_inv: f64, target: &RealVector) -> Result<RealVector> {
        if !(rho_inv > 0.0 && rho_inv.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho_inv must be > 0, got {rho_inv}")));
        }
        check_dim("augmented target", self.b.rows(), target.len())?;
        match &self.strategy {
            Strategy::ScaledIdentity(c) => {
                let center = if *c == 1.0 { target.clone() } else { target / *c };
                self.g.prox(&RealVector::zeros(self.g.dim()), &center, rho_inv / (c * c))
            }
            Strategy::Normal { gram, base } => {
                let mut rhs = self.b.adjoint(target)?;
                let diag = match self.g.kind() {
                    ProxKind::Linear(q) => {
                        rhs -= q * rho_inv;
                        None
                    }
                    ProxKind::Quadratic { diag, linear } => {
                        rhs -= linear * rho_inv;
                        Some(diag)
                    }
                    _ => None,
                };
                if let Some(chol) = base {
                    return Ok(chol.solve(&rhs));
                }
                let d = diag.expect("curvature present when no cached factor");
                let m = gram + DMatrix::from_diagonal(&(d * rho_inv));
                let chol = Cholesky::new(m).ok_or_else(|| {
                    Error::OracleUnavailable("normal-equation matrix lost definiteness".into())
                })?;
                Ok(chol.solve(&rhs))
            }
            Strategy::Iterative { gram } => self.solve_iterative(gram, rho_inv, target),
        }
    }

    fn solve_iterative(
        &self,
        gram: &DMatrix<f64>,
        rho_inv: f64,
        target: &RealVector,
    ) -> Result<RealVector> {
        let bt = self.b.adjoint(target)?;
        let step = rho_inv / self.gram_norm;
        let grad = |w: &RealVector| (gram * w - &bt) / rho_inv;
        let tol = 1e-13 * (1.0 + bt.norm() / rho_inv);
        let mut w = self.g.domain().project(&RealVector::zeros(self.g.dim()));
        let mut v = w.clone();
        let mut theta = 1.0_f64;
        for _ in 0..ITERATIVE_MAX_STEPS {
            let w_next = self.g.prox(&grad(&v), &v, step)?;
            if (&w_next - &v).norm() / step <= tol {
                return Ok(w_next);
            }
            // gradient-based restart keeps the momentum monotone
            let restart = (&v - &w_next).dot(&(&w_next - &w)) > 0.0;
            let theta_next = if restart {
                1.0
            } else {
                0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt())
            };
            let momentum = if restart { 0.0 } else { (theta - 1.0) / theta_next };
            v = &w_next + (&w_next - &w) * momentum;
            w = w_next;
            theta = theta_next;
        }
        Err(Error::OracleUnavailable(
            "iterative augmented solve did not reach the optimality tolerance".into(),
        ))
    }

    /// Proximal-gradient fixed-point residual of the subproblem at `w`.
    pub fn residual(&self, w: &RealVector, rho_inv: f64, target: &RealVector) -> Result<f64> {
        let r = self.b.forward(w)? - target;
        let g = self.b.adjoint(&r)? / rho_inv;
        let step = rho_inv / self.gram_norm.max(f64::MIN_POSITIVE);
        let mapped = self.g.prox(&g, w, step)?;
        Ok((w - mapped).norm() / step)
    }
}
