//! Seeded benchmark families with planted optimal solutions, and independent
//! reference solvers used to cross-check them.
//!
//! Every family is built backwards from a chosen primal-dual pair, so the
//! ground truth is exact up to rounding. [`reference_solve`] recomputes it by
//! means that never touch the planted values.

use nalgebra::{DMatrix, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accel::{SmoothSaddleProblem, SmoothTwoBlockProblem};
use crate::admm::TwoBlockProblem;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_reference, BoxSet, LinearMap, RealVector};
use crate::oracles::{AugmentedOracle, ProxOracle, SmoothOracle};
use crate::pdhg::SaddleProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `min_{x∈[−r,r]ⁿ} max_{y∈[−r,r]ᵐ} ⟨c,x⟩ + ⟨Ax,y⟩ − ⟨d,y⟩`
    BoxBilinear,
    /// `min ½xᵀdiag(p)x + qᵀx` over a box subject to `Ax = b`
    ConstrainedQp,
    /// `min F(x) + G(w)` subject to `Bw − Kx = b`, diagonal quadratics
    TwoBlockQp,
    /// `min ½‖Cx − d‖² + λ‖x‖₁` as `min_x max_y λ‖x‖₁ + ⟨Cx,y⟩ − ½‖y‖² − ⟨d,y⟩`
    LassoAsSaddle,
    /// Dense positive definite quadratic over a box subject to `Ax = b`
    SmoothConstrained,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::BoxBilinear => "box-bilinear",
            Family::ConstrainedQp => "constrained-qp",
            Family::TwoBlockQp => "two-block-qp",
            Family::LassoAsSaddle => "lasso-as-saddle",
            Family::SmoothConstrained => "smooth-constrained",
        }
    }
}

/// Conditioning and shape knobs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Knobs {
    /// Spectral norm of `A` (or `K`).
    pub op_scale: f64,
    /// `‖B‖/‖K‖` for two-block families.
    pub norm_ratio: f64,
    /// Scale of the primal curvature; 0 makes `f` linear where allowed.
    pub curvature: f64,
    /// Scale of the planted dual solution.
    pub dual_scale: f64,
    /// Half-width `r` of the box `[−r, r]ⁿ`.
    pub box_radius: f64,
    /// `λ` of the lasso family.
    pub lambda: f64,
    /// Two-block family: smooth `F` (for the accelerated method).
    pub smooth: bool,
    /// Two-block family: `B = ‖B‖·I` with `n₂ = m`.
    pub b_identity: bool,
}

impl Default for Knobs {
    fn default() -> Self {
        Self {
            op_scale: 1.0,
            norm_ratio: 1.0,
            curvature: 1.0,
            dual_scale: 1.0,
            box_radius: 1.0,
            lambda: 0.1,
            smooth: false,
            b_identity: false,
        }
    }
}

/// Everything needed to regenerate a problem bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub family: Family,
    pub n: usize,
    pub m: usize,
    /// Size of the `w` block for two-block families; defaults to `m`.
    #[serde(default)]
    pub n2: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub knobs: Knobs,
}

impl ProblemSpec {
    pub fn new(family: Family, n: usize, m: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            m,
            n2: None,
            seed,
            knobs: Knobs::default(),
        }
    }

    pub fn with_knobs(mut self, knobs: Knobs) -> Self {
        self.knobs = knobs;
        self
    }

    pub fn with_n2(mut self, n2: usize) -> Self {
        self.n2 = Some(n2);
        self
    }
}

mod vec_serde {
    use super::RealVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &RealVector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealVector, D::Error> {
        Ok(RealVector::from_vec(Vec::<f64>::deserialize(d)?))
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<RealVector>, s: S) -> Result<S::Ok, S::Error> {
            v.as_ref().map(|v| v.as_slice().to_vec()).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<RealVector>, D::Error> {
            Ok(Option::<Vec<f64>>::deserialize(d)?.map(RealVector::from_vec))
        }
    }
}

/// Residuals of the optimality conditions at a claimed solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// Natural residual of the primal (x) optimality condition.
    pub primal: f64,
    /// Dual (y) optimality or, for constrained families, the `w` block.
    pub dual: f64,
    /// `‖Ax − b‖` or `‖Bw − Kx − b‖`; 0 for saddle families.
    pub feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.feasibility)
    }
}

/// A known solution with its optimality certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(with = "vec_serde")]
    pub x_star: RealVector,
    #[serde(with = "vec_serde")]
    pub y_star: RealVector,
    #[serde(default, with = "vec_serde::opt")]
    pub w_star: Option<RealVector>,
    /// Optimal objective (the saddle value for saddle families).
    pub f_star: f64,
    pub kkt: KktResiduals,
}

/// The solver-facing problem object of a generated instance.
#[derive(Debug, Clone)]
pub enum Instance {
    Saddle(SaddleProblem),
    SmoothSaddle(SmoothSaddleProblem),
    TwoBlock(TwoBlockProblem),
    SmoothTwoBlock(SmoothTwoBlockProblem),
}

impl Instance {
    pub fn x_domain(&self) -> &BoxSet {
        match self {
            Instance::Saddle(p) => p.f().domain(),
            Instance::SmoothSaddle(p) => p.x_domain(),
            Instance::TwoBlock(p) => p.f().domain(),
            Instance::SmoothTwoBlock(p) => p.x_domain(),
        }
    }

    /// `Y` for saddle instances; two-block duals are free.
    pub fn y_domain(&self) -> Option<&BoxSet> {
        match self {
            Instance::Saddle(p) => Some(p.g().domain()),
            Instance::SmoothSaddle(p) => Some(p.g().domain()),
            _ => None,
        }
    }

    pub fn as_saddle(&self) -> Option<&SaddleProblem> {
        match self {
            Instance::Saddle(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_smooth_saddle(&self) -> Option<&SmoothSaddleProblem> {
        match self {
            Instance::SmoothSaddle(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_two_block(&self) -> Option<&TwoBlockProblem> {
        match self {
            Instance::TwoBlock(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_smooth_two_block(&self) -> Option<&SmoothTwoBlockProblem> {
        match self {
            Instance::SmoothTwoBlock(p) => Some(p),
            _ => None,
        }
    }
}

/// A generated problem with its planted solution.
#[derive(Debug, Clone)]
pub struct Generated {
    pub spec: ProblemSpec,
    pub instance: Instance,
    pub truth: GroundTruth,
}

impl Generated {
    /// Diameter of `X`, when bounded.
    pub fn d_x(&self) -> Option<f64> {
        self.instance.x_domain().diameter()
    }
}

/// Replayable form of a generated problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub spec: ProblemSpec,
    pub truth: GroundTruth,
}

impl ProblemDocument {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses a document, regenerates the problem and checks that the planted
    /// truth matches the stored one exactly.
    pub fn replay(json: &str) -> Result<Generated> {
        let doc: ProblemDocument = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
        let g = generate(&doc.spec)?;
        if g.truth != doc.truth {
            return Err(Error::Generation("stored truth differs from the regenerated one".into()));
        }
        Ok(g)
    }
}

impl From<&Generated> for ProblemDocument {
    fn from(g: &Generated) -> Self {
        Self {
            spec: g.spec.clone(),
            truth: g.truth.clone(),
        }
    }
}

const MAX_DRAWS: usize = 10;
const KKT_TOL: f64 = 1e-10;

/// Builds the problem described by `spec` from its seed.
pub fn generate(spec: &ProblemSpec) -> Result<Generated> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last = String::new();
    for draw in 0..MAX_DRAWS {
        let attempt = match spec.family {
            Family::BoxBilinear => gen_box_bilinear(spec, &mut rng),
            Family::ConstrainedQp => gen_constrained_qp(spec, &mut rng, false),
            Family::SmoothConstrained => gen_constrained_qp(spec, &mut rng, true),
            Family::TwoBlockQp => gen_two_block(spec, &mut rng),
            Family::LassoAsSaddle => gen_lasso(spec, &mut rng),
        };
        match attempt {
            Ok(Some(g)) if g.truth.kkt.max() <= KKT_TOL => return Ok(g),
            Ok(Some(g)) => last = format!("KKT residual {:e}", g.truth.kkt.max()),
            Ok(None) => last = "degenerate operator draw".into(),
            Err(e) => return Err(e),
        }
        log::debug!("redraw {} of {}: {last}", draw + 1, spec.family.name());
    }
    Err(Error::Generation(format!(
        "{} draws of {} failed, last: {last}",
        MAX_DRAWS,
        spec.family.name()
    )))
}

fn validate(spec: &ProblemSpec) -> Result<()> {
    let k = &spec.knobs;
    let bad = |m: String| Err(Error::InvalidConfig(m));
    if spec.n == 0 || spec.m == 0 {
        return bad("problem dimensions must be positive".into());
    }
    if !(k.op_scale > 0.0 && k.norm_ratio > 0.0 && k.box_radius > 0.0 && k.lambda > 0.0) {
        return bad("op_scale, norm_ratio, box_radius and lambda must be positive".into());
    }
    if !(k.curvature >= 0.0 && k.dual_scale >= 0.0) {
        return bad("curvature and dual_scale must be nonnegative".into());
    }
    match spec.family {
        Family::ConstrainedQp | Family::SmoothConstrained if spec.m >= spec.n => {
            bad(format!("constrained families need m < n, got m={} n={}", spec.m, spec.n))
        }
        Family::SmoothConstrained if k.curvature == 0.0 => {
            bad("smooth-constrained needs positive curvature".into())
        }
        Family::LassoAsSaddle if spec.m < spec.n => {
            bad(format!("lasso family needs m >= n, got m={} n={}", spec.m, spec.n))
        }
        Family::TwoBlockQp if k.b_identity && spec.n2.is_some_and(|n2| n2 != spec.m) => {
            bad("b_identity needs n2 = m".into())
        }
        _ => Ok(()),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> RealVector {
    RealVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> RealVector {
    RealVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

/// Gaussian matrix rescaled to spectral norm `scale`; `None` if its smallest
/// singular value is below `1e-6` of the largest.
fn scaled_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Option<DMatrix<f64>> {
    let m = gaussian(rng, rows, cols);
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let (smax, smin) = sv.iter().fold((0.0_f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    if !(smax > 0.0) || smin < 1e-6 * smax {
        return None;
    }
    Some(m * (scale / smax))
}

/// Natural residual `‖x − proj_X(x − grad)‖`.
fn natural_residual(domain: &BoxSet, x: &RealVector, grad: &RealVector) -> f64 {
    (x - domain.project(&(x - grad))).norm()
}

fn interior_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> RealVector {
    uniform_vec(rng, n, -0.5 * r, 0.5 * r)
}

fn gen_box_bilinear(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Option<Generated>> {
    let (n, m, k) = (spec.n, spec.m, &spec.knobs);
    let a = gaussian(rng, m, n);
    let norm = SVD::new(a.clone(), false, false).singular_values.max();
    if !(norm > 0.0) {
        return Ok(None);
    }
    let a = a * (k.op_scale / norm);
    let x_star = interior_point(rng, n, k.box_radius);
    let y_star = interior_point(rng, m, k.box_radius) * k.dual_scale.min(1.0);
    let c = -a.tr_mul(&y_star);
    let d = &a * &x_star;
    let xs = BoxSet::uniform(n, -k.box_radius, k.box_radius)?;
    let ys = BoxSet::uniform(m, -k.box_radius, k.box_radius)?;
    let f = ProxOracle::linear(c.clone(), xs.clone())?;
    let g = ProxOracle::linear(d.clone(), ys.clone())?;
    // independent residuals: ∇_x = c + Aᵀy*, ∇_y = Ax* − d
    let kkt = KktResiduals {
        primal: natural_residual(&xs, &x_star, &(&c + a.tr_mul(&y_star))),
        dual: natural_residual(&ys, &y_star, &(&d - &a * &x_star)),
        feasibility: 0.0,
    };
    let f_star = c.dot(&x_star) + (&a * &x_star).dot(&y_star) - d.dot(&y_star);
    let problem = SaddleProblem::new(f, g, LinearMap::dense(a)?)?;
    Ok(Some(Generated {
        spec: spec.clone(),
        instance: Instance::Saddle(problem),
        truth: GroundTruth {
            x_star,
            y_star,
            w_star: None,
            f_star,
            kkt,
        },
    }))
}

fn gen_constrained_qp(spec: &ProblemSpec, rng: &mut ChaCha8Rng, smooth: bool) -> Result<Option<Generated>> {
    let (n, m, k) = (spec.n, spec.m, &spec.knobs);
    let Some(a) = scaled_matrix(rng, m, n, k.op_scale) else {
        return Ok(None);
    };
    let x_star = interior_point(rng, n, k.box_radius);
    let y_star = gaussian_vec(rng, m) * k.dual_scale;
    let b = &a * &x_star;
    let xs = BoxSet::uniform(n, -k.box_radius, k.box_radius)?;
    let p = if smooth {
        let mm = gaussian(rng, n, n);
        (mm.tr_mul(&mm) / n as f64 + DMatrix::identity(n, n) * 0.1) * k.curvature
    } else {
        DMatrix::from_diagonal(&(uniform_vec(rng, n, 0.5, 2.0) * k.curvature))
    };
    let p = (&p + p.transpose()) * 0.5;
    // ∇f(x*) + Aᵀy* = 0
    let q = -(&p * &x_star) - a.tr_mul(&y_star);
    let grad = &p * &x_star + &q + a.tr_mul(&y_star);
    let kkt = KktResiduals {
        primal: natural_residual(&xs, &x_star, &grad),
        dual: 0.0,
        feasibility: (&a * &x_star - &b).norm(),
    };
    let f_star = 0.5 * x_star.dot(&(&p * &x_star)) + q.dot(&x_star);
    let a_map = LinearMap::dense(a)?;
    let instance = if smooth {
        Instance::SmoothSaddle(SmoothSaddleProblem::constrained(
            SmoothOracle::quadratic(p, q)?,
            xs,
            a_map,
            b,
        )?)
    } else {
        let f = if k.curvature == 0.0 {
            ProxOracle::linear(q, xs)?
        } else {
            ProxOracle::quadratic(p.diagonal(), q, xs)?
        };
        Instance::Saddle(SaddleProblem::constrained(f, a_map, b)?)
    };
    Ok(Some(Generated {
        spec: spec.clone(),
        instance,
        truth: GroundTruth {
            x_star,
            y_star,
            w_star: None,
            f_star,
            kkt,
        },
    }))
}

fn gen_two_block(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Option<Generated>> {
    let (n1, m, k) = (spec.n, spec.m, &spec.knobs);
    let n2 = spec.n2.unwrap_or(m);
    let Some(kmat) = scaled_matrix(rng, m, n1, k.op_scale) else {
        return Ok(None);
    };
    let b_norm = k.norm_ratio * k.op_scale;
    let bmat = if k.b_identity {
        DMatrix::identity(m, m) * b_norm
    } else {
        let Some(bm) = scaled_matrix(rng, m, n2, b_norm) else {
            return Ok(None);
        };
        bm
    };
    let x_star = interior_point(rng, n1, k.box_radius);
    let w_star = gaussian_vec(rng, n2);
    let y_star = gaussian_vec(rng, m) * k.dual_scale;
    let b = &bmat * &w_star - &kmat * &x_star;
    let xs = BoxSet::uniform(n1, -k.box_radius, k.box_radius)?;
    let p = if k.smooth {
        let mm = gaussian(rng, n1, n1);
        (mm.tr_mul(&mm) / n1 as f64 + DMatrix::identity(n1, n1) * 0.1) * k.curvature
    } else {
        DMatrix::from_diagonal(&(uniform_vec(rng, n1, 0.5, 2.0) * k.curvature))
    };
    let p = (&p + p.transpose()) * 0.5;
    let r = uniform_vec(rng, n2, 0.5, 2.0);
    // ∇F(x*) + Kᵀy* = 0 and ∇G(w*) − Bᵀy* = 0
    let q = -(&p * &x_star) - kmat.tr_mul(&y_star);
    let s = bmat.tr_mul(&y_star) - r.component_mul(&w_star);
    let kkt = KktResiduals {
        primal: natural_residual(&xs, &x_star, &(&p * &x_star + &q + kmat.tr_mul(&y_star))),
        dual: (r.component_mul(&w_star) + &s - bmat.tr_mul(&y_star)).norm(),
        feasibility: (&bmat * &w_star - &kmat * &x_star - &b).norm(),
    };
    let f_star = 0.5 * x_star.dot(&(&p * &x_star))
        + q.dot(&x_star)
        + 0.5 * w_star.dot(&r.component_mul(&w_star))
        + s.dot(&w_star);
    let g = ProxOracle::quadratic(r, s, BoxSet::free(n2))?;
    let b_map = if k.b_identity {
        LinearMap::identity(m).scaled(b_norm)
    } else {
        LinearMap::dense(bmat)?
    };
    let g_aug = AugmentedOracle::new(g, b_map)?;
    let k_map = LinearMap::dense(kmat)?;
    let instance = if k.smooth {
        Instance::SmoothTwoBlock(SmoothTwoBlockProblem::new(
            SmoothOracle::quadratic(p, q)?,
            xs,
            g_aug,
            k_map,
            b,
        )?)
    } else {
        let f = if k.curvature == 0.0 {
            ProxOracle::linear(q, xs)?
        } else {
            ProxOracle::quadratic(p.diagonal(), q, xs)?
        };
        Instance::TwoBlock(TwoBlockProblem::new(f, g_aug, k_map, b)?)
    };
    Ok(Some(Generated {
        spec: spec.clone(),
        instance,
        truth: GroundTruth {
            x_star,
            y_star,
            w_star: Some(w_star),
            f_star,
            kkt,
        },
    }))
}

fn gen_lasso(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Option<Generated>> {
    let (n, m, k) = (spec.n, spec.m, &spec.knobs);
    let Some(c) = scaled_matrix(rng, m, n, k.op_scale) else {
        return Ok(None);
    };
    let lambda = k.lambda;
    // support: each coordinate with probability ½, at least one
    let mut support: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    if !support.iter().any(|s| *s) {
        support[0] = true;
    }
    let mut x_star = RealVector::zeros(n);
    let mut v = RealVector::zeros(n);
    for i in 0..n {
        if support[i] {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            x_star[i] = sign * rng.gen_range(0.5..1.5);
            v[i] = -lambda * sign;
        } else {
            v[i] = -lambda * rng.gen_range(-0.9..0.9);
        }
    }
    // y* = C(CᵀC)⁻¹v gives Cᵀy* = v ∈ −λ∂‖x*‖₁
    let Some(chol) = c.tr_mul(&c).cholesky() else {
        return Ok(None);
    };
    let y_star = &c * chol.solve(&v);
    let d = &c * &x_star - &y_star;
    let cty = c.tr_mul(&y_star);
    let primal = (0..n)
        .map(|i| {
            if x_star[i] != 0.0 {
                (cty[i] + lambda * x_star[i].signum()).powi(2)
            } else {
                (cty[i].abs() - lambda).max(0.0).powi(2)
            }
        })
        .sum::<f64>()
        .sqrt();
    let kkt = KktResiduals {
        primal,
        dual: (&c * &x_star - &d - &y_star).norm(),
        feasibility: 0.0,
    };
    let f_star = 0.5 * (&c * &x_star - &d).norm_squared() + lambda * x_star.abs().sum();
    let f = ProxOracle::l1(lambda, BoxSet::free(n))?;
    let g = ProxOracle::quadratic(RealVector::from_element(m, 1.0), d, BoxSet::free(m))?;
    let problem = SaddleProblem::new(f, g, LinearMap::dense(c)?)?;
    Ok(Some(Generated {
        spec: spec.clone(),
        instance: Instance::Saddle(problem),
        truth: GroundTruth {
            x_star,
            y_star,
            w_star: None,
            f_star,
            kkt,
        },
    }))
}

/// Constant-stepsize PDHG with `τ = σ = 0.95/‖A‖` (norm from the power
/// method): `x⁺ = prox_f(x − τAᵀy)`, `y⁺ = prox_g(y + σA(2x⁺ − x))`.
pub fn classical_pdhg(
    problem: &SaddleProblem,
    x0: &RealVector,
    y0: &RealVector,
    iters: usize,
) -> Result<(RealVector, RealVector)> {
    let a = problem.a();
    let norm = spectral_norm_reference(a, 500)?;
    let step = if norm > 0.0 { 0.95 / norm } else { 1.0 };
    let (mut x, mut y) = (x0.clone(), y0.clone());
    for _ in 0..iters {
        let x_new = problem.f().prox(&a.adjoint(&y)?, &x, step)?;
        let extrap = &x_new * 2.0 - &x;
        y = problem.g().prox(&-a.forward(&extrap)?, &y, step)?;
        x = x_new;
    }
    Ok((x, y))
}

fn dense(a: &LinearMap) -> DMatrix<f64> {
    a.to_dense()
}

/// Solves `[[H, Mᵀ], [M, 0]] (x, y) = (−h, rhs)`.
fn kkt_solve(h: &DMatrix<f64>, lin: &RealVector, mmat: &DMatrix<f64>, rhs: &RealVector) -> Result<(RealVector, RealVector)> {
    let (n, m) = (h.nrows(), mmat.nrows());
    let mut kk = DMatrix::zeros(n + m, n + m);
    kk.view_mut((0, 0), (n, n)).copy_from(h);
    kk.view_mut((0, n), (n, m)).copy_from(&mmat.transpose());
    kk.view_mut((n, 0), (m, n)).copy_from(mmat);
    let mut r = RealVector::zeros(n + m);
    r.rows_mut(0, n).copy_from(&-lin);
    r.rows_mut(n, m).copy_from(rhs);
    let sol = kk
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Generation("singular KKT matrix".into()))?;
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
}

fn require_interior(domain: &BoxSet, x: &RealVector) -> Result<()> {
    if domain.contains(x, 0.0) {
        Ok(())
    } else {
        Err(Error::Unsupported("equality-constrained solution leaves the box".into()))
    }
}

/// Step of the grid used by the grid reference.
pub const GRID_STEPS: usize = 1000;

/// Minimizes `h` over a box of dimension ≤ 2 on a grid with `GRID_STEPS`
/// intervals per coordinate.
fn grid_argmin(domain: &BoxSet, h: impl Fn(&RealVector) -> Result<f64>) -> Result<RealVector> {
    let n = domain.dim();
    if n > 2 || !domain.is_bounded() {
        return Err(Error::Unsupported("grid reference covers bounded boxes of dim <= 2".into()));
    }
    let mut x = RealVector::zeros(n);
    let mut best = (f64::INFINITY, x.clone());
    for idx in 0..(GRID_STEPS + 1).pow(n as u32) {
        let mut r = idx;
        for i in 0..n {
            let (l, u) = (domain.lower()[i], domain.upper()[i]);
            x[i] = l + (u - l) * (r % (GRID_STEPS + 1)) as f64 / GRID_STEPS as f64;
            r /= GRID_STEPS + 1;
        }
        let v = h(&x)?;
        if v < best.0 {
            best = (v, x.clone());
        }
    }
    Ok(best.1)
}

/// Recomputes a solution without using the planted one: a dense KKT solve for
/// the quadratic families, a grid for small box-bilinear problems, and a long
/// classical PDHG run otherwise.
pub fn reference_solve(g: &Generated) -> Result<GroundTruth> {
    match (&g.spec.family, &g.instance) {
        (Family::ConstrainedQp, Instance::Saddle(p)) | (Family::SmoothConstrained, Instance::Saddle(p)) => {
            let (pm, q) = match p.f().kind() {
                crate::oracles::ProxKind::Quadratic { diag, linear } => (DMatrix::from_diagonal(diag), linear.clone()),
                _ => return Err(Error::Unsupported("dense KKT needs positive curvature".into())),
            };
            constrained_reference(p.f().domain(), &pm, &q, &dense(p.a()), p.b().expect("constrained"))
        }
        (_, Instance::SmoothSaddle(p)) => {
            let SmoothOracle::Quadratic { p: pm, q } = p.f() else {
                return Err(Error::Unsupported("dense KKT needs a quadratic".into()));
            };
            let b = p.b().ok_or_else(|| Error::Unsupported("saddle form without b".into()))?;
            constrained_reference(p.x_domain(), pm, q, &dense(p.a()), b)
        }
        (_, Instance::TwoBlock(p)) => {
            let (pm, q) = match p.f().kind() {
                crate::oracles::ProxKind::Quadratic { diag, linear } => (DMatrix::from_diagonal(diag), linear.clone()),
                _ => return Err(Error::Unsupported("dense KKT needs positive curvature".into())),
            };
            two_block_reference(p.f().domain(), &pm, &q, p.g_aug(), &dense(p.k()), p.b())
        }
        (_, Instance::SmoothTwoBlock(p)) => {
            let SmoothOracle::Quadratic { p: pm, q } = p.f() else {
                return Err(Error::Unsupported("dense KKT needs a quadratic".into()));
            };
            two_block_reference(p.x_domain(), pm, q, p.g_aug(), &dense(p.k()), p.b())
        }
        (Family::BoxBilinear, Instance::Saddle(p)) => box_bilinear_reference(p),
        (Family::LassoAsSaddle, Instance::Saddle(p)) => lasso_reference(p),
        _ => Err(Error::Unsupported("no reference solver for this instance".into())),
    }
}

fn constrained_reference(
    domain: &BoxSet,
    pm: &DMatrix<f64>,
    q: &RealVector,
    a: &DMatrix<f64>,
    b: &RealVector,
) -> Result<GroundTruth> {
    let (x, y) = kkt_solve(pm, q, a, b)?;
    require_interior(domain, &x)?;
    let kkt = KktResiduals {
        primal: natural_residual(domain, &x, &(pm * &x + q + a.tr_mul(&y))),
        dual: 0.0,
        feasibility: (a * &x - b).norm(),
    };
    Ok(GroundTruth {
        f_star: 0.5 * x.dot(&(pm * &x)) + q.dot(&x),
        x_star: x,
        y_star: y,
        w_star: None,
        kkt,
    })
}

fn two_block_reference(
    domain: &BoxSet,
    pm: &DMatrix<f64>,
    q: &RealVector,
    g_aug: &AugmentedOracle,
    k: &DMatrix<f64>,
    b: &RealVector,
) -> Result<GroundTruth> {
    let (r, s) = match g_aug.g().kind() {
        crate::oracles::ProxKind::Quadratic { diag, linear } if g_aug.g().domain().is_free() => {
            (diag.clone(), linear.clone())
        }
        _ => return Err(Error::Unsupported("dense KKT needs a free quadratic G".into())),
    };
    let bm = dense(g_aug.b());
    let (n1, n2) = (pm.nrows(), r.len());
    // stationarity in (x, w) and the constraint Kx − Bw = −b, with multiplier y
    let mut h = DMatrix::zeros(n1 + n2, n1 + n2);
    h.view_mut((0, 0), (n1, n1)).copy_from(pm);
    h.view_mut((n1, n1), (n2, n2)).copy_from(&DMatrix::from_diagonal(&r));
    let mut lin = RealVector::zeros(n1 + n2);
    lin.rows_mut(0, n1).copy_from(q);
    lin.rows_mut(n1, n2).copy_from(&s);
    let mut mm = DMatrix::zeros(k.nrows(), n1 + n2);
    mm.view_mut((0, 0), (k.nrows(), n1)).copy_from(k);
    mm.view_mut((0, n1), (k.nrows(), n2)).copy_from(&-&bm);
    let (xw, y) = kkt_solve(&h, &lin, &mm, &-b)?;
    let x = xw.rows(0, n1).into_owned();
    let w = xw.rows(n1, n2).into_owned();
    require_interior(domain, &x)?;
    let kkt = KktResiduals {
        primal: natural_residual(domain, &x, &(pm * &x + q + k.tr_mul(&y))),
        dual: (r.component_mul(&w) + &s - bm.tr_mul(&y)).norm(),
        feasibility: (&bm * &w - k * &x - b).norm(),
    };
    Ok(GroundTruth {
        f_star: 0.5 * x.dot(&(pm * &x)) + q.dot(&x) + 0.5 * w.dot(&r.component_mul(&w)) + s.dot(&w),
        x_star: x,
        y_star: y,
        w_star: Some(w),
        kkt,
    })
}

fn box_bilinear_reference(p: &SaddleProblem) -> Result<GroundTruth> {
    let a = p.a();
    // the sup-gap splits into a function of x̄ plus a function of ȳ
    let primal = |x: &RealVector| -> Result<f64> {
        let ax = a.forward(x)?;
        let mut v = p.f().value(x)?;
        for i in 0..ax.len() {
            v += p.g().coord_conjugate_on_box(i, ax[i]).expect("bounded Y");
        }
        Ok(v)
    };
    let dual = |y: &RealVector| -> Result<f64> {
        let aty = a.adjoint(y)?;
        let mut v = p.g().value(y)?;
        for i in 0..aty.len() {
            v += p.f().coord_conjugate_on_box(i, -aty[i]).expect("bounded X");
        }
        Ok(v)
    };
    let (x, y) = if p.f().dim() <= 2 && p.g().dim() <= 2 {
        (grid_argmin(p.f().domain(), primal)?, grid_argmin(p.g().domain(), dual)?)
    } else {
        classical_pdhg(p, &RealVector::zeros(p.f().dim()), &RealVector::zeros(p.g().dim()), 200_000)?
    };
    let ax = a.forward(&x)?;
    let f_star = p.f().value(&x)? + ax.dot(&y) - p.g().value(&y)?;
    let kkt = KktResiduals {
        primal: natural_residual(p.f().domain(), &x, &(linear_of(p.f()) + a.adjoint(&y)?)),
        dual: natural_residual(p.g().domain(), &y, &(linear_of(p.g()) - ax)),
        feasibility: 0.0,
    };
    Ok(GroundTruth {
        x_star: x,
        y_star: y,
        w_star: None,
        f_star,
        kkt,
    })
}

fn linear_of(h: &ProxOracle) -> RealVector {
    match h.kind() {
        crate::oracles::ProxKind::Linear(c) => c.clone(),
        _ => RealVector::zeros(h.dim()),
    }
}

fn lasso_reference(p: &SaddleProblem) -> Result<GroundTruth> {
    let (n, m) = (p.f().dim(), p.g().dim());
    let (x, y) = classical_pdhg(p, &RealVector::zeros(n), &RealVector::zeros(m), 200_000)?;
    let lambda = match p.f().kind() {
        crate::oracles::ProxKind::L1 { lambda } => *lambda,
        _ => return Err(Error::Unsupported("lasso reference needs an l1 f".into())),
    };
    let d = match p.g().kind() {
        crate::oracles::ProxKind::Quadratic { linear, .. } => linear.clone(),
        _ => return Err(Error::Unsupported("lasso reference needs a quadratic g".into())),
    };
    let a = p.a();
    let resid = a.forward(&x)? - &d;
    let cty = a.adjoint(&y)?;
    let primal = (0..n)
        .map(|i| {
            if x[i] != 0.0 {
                (cty[i] + lambda * x[i].signum()).powi(2)
            } else {
                (cty[i].abs() - lambda).max(0.0).powi(2)
            }
        })
        .sum::<f64>()
        .sqrt();
    Ok(GroundTruth {
        f_star: 0.5 * resid.norm_squared() + lambda * x.abs().sum(),
        kkt: KktResiduals {
            primal,
            dual: (&resid - &y).norm(),
            feasibility: 0.0,
        },
        x_star: x,
        y_star: y,
        w_star: None,
    })
}

/// `φ_μ(x) = f(x) + ‖Ax − b‖²/(2μ)`, the objective the constrained runs
/// minimize for fixed `μ`.
pub fn smoothed_objective(g: &Generated, x: &RealVector, mu: f64) -> Result<f64> {
    match &g.instance {
        Instance::Saddle(p) => {
            let b = p.b().ok_or_else(|| Error::Unsupported("not a constrained instance".into()))?;
            Ok(p.f().value(x)? + (p.a().forward(x)? - b).norm_squared() / (2.0 * mu))
        }
        Instance::SmoothSaddle(p) => {
            let b = p.b().ok_or_else(|| Error::Unsupported("not a constrained instance".into()))?;
            Ok(p.f().value(x)? + (p.a().forward(x)? - b).norm_squared() / (2.0 * mu))
        }
        _ => Err(Error::Unsupported("smoothed objective covers the constrained families".into())),
    }
}

/// Minimizer and value of [`smoothed_objective`] by one dense linear solve;
/// errors if the minimizer leaves `X`.
pub fn smoothed_reference(g: &Generated, mu: f64) -> Result<(RealVector, f64)> {
    let (pm, q, a, b, domain) = match &g.instance {
        Instance::Saddle(p) => match (p.f().kind(), p.b()) {
            (crate::oracles::ProxKind::Quadratic { diag, linear }, Some(b)) => {
                (DMatrix::from_diagonal(diag), linear.clone(), dense(p.a()), b.clone(), p.f().domain())
            }
            _ => return Err(Error::Unsupported("smoothed reference needs a constrained quadratic".into())),
        },
        Instance::SmoothSaddle(p) => match (p.f(), p.b()) {
            (SmoothOracle::Quadratic { p: pm, q }, Some(b)) => (pm.clone(), q.clone(), dense(p.a()), b.clone(), p.x_domain()),
            _ => return Err(Error::Unsupported("smoothed reference needs a constrained quadratic".into())),
        },
        _ => return Err(Error::Unsupported("smoothed reference covers the constrained families".into())),
    };
    let h = &pm + a.tr_mul(&a) / mu;
    let rhs = a.tr_mul(&b) / mu - &q;
    let x = h
        .cholesky()
        .ok_or_else(|| Error::Unsupported("smoothed Hessian is not positive definite".into()))?
        .solve(&rhs);
    require_interior(domain, &x)?;
    let v = smoothed_objective(g, &x, mu)?;
    Ok((x, v))
}

/// `h` as a smooth oracle, for zero, linear and diagonal quadratic kinds.
pub fn smooth_from_prox(h: &ProxOracle) -> Result<SmoothOracle> {
    use crate::oracles::ProxKind;
    match h.kind() {
        ProxKind::Zero | ProxKind::Indicator => Ok(SmoothOracle::linear(RealVector::zeros(h.dim()))),
        ProxKind::Linear(c) => Ok(SmoothOracle::linear(c.clone())),
        ProxKind::Quadratic { diag, linear } => SmoothOracle::quadratic(DMatrix::from_diagonal(diag), linear.clone()),
        ProxKind::L1 { .. } => Err(Error::Unsupported("l1 term is not smooth".into())),
    }
}

/// The same problem with the prox-friendly primal function handed to the
/// accelerated methods as a smooth oracle over the same box.
pub fn smooth_form(instance: &Instance) -> Result<Instance> {
    match instance {
        Instance::Saddle(p) => {
            let f = smooth_from_prox(p.f())?;
            let x = p.f().domain().clone();
            Ok(Instance::SmoothSaddle(match p.b() {
                Some(b) => SmoothSaddleProblem::constrained(f, x, p.a().clone(), b.clone())?,
                None => SmoothSaddleProblem::new(f, x, p.g().clone(), p.a().clone())?,
            }))
        }
        Instance::TwoBlock(p) => Ok(Instance::SmoothTwoBlock(SmoothTwoBlockProblem::new(
            smooth_from_prox(p.f())?,
            p.f().domain().clone(),
            p.g_aug().clone(),
            p.k().clone(),
            p.b().clone(),
        )?)),
        other => Ok(other.clone()),
    }
}
