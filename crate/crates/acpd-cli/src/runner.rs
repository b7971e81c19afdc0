//! Executes configs and writes their output files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use acpd::accel::{aadmm_solve, apdhg_solve};
use acpd::certify::{guess_and_check_admm, guess_and_check_pdhg, radius, GuessCheckConfig, GuessCheckOutcome};
use acpd::driver::{Certificate, SolveOptions, SolveReport, StopReason, StopRule};
use acpd::problems::{smooth_form, Generated, Instance, ProblemSpec};
use acpd::trace::write_csv;
use acpd::{admm, pdhg, RealVector};
use serde::Serialize;

use crate::config::{AlgorithmName, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(acpd::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(acpd::Error::InvalidConfig(_) | acpd::Error::Parse(_)) => 2,
            CliError::Solver(acpd::Error::Divergence { .. }) => 3,
            CliError::Solver(_) | CliError::Io(_) => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "InvalidConfig",
            CliError::Solver(e) => e.name(),
            CliError::Io(_) => "Io",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
            CliError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl From<acpd::Error> for CliError {
    fn from(e: acpd::Error) -> Self {
        CliError::Solver(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Command-line overrides and the resolved output directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub config_dir: PathBuf,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
}

#[derive(Serialize)]
struct CertificateFile<'a> {
    algorithm: &'static str,
    problem: &'a ProblemSpec,
    iterations: usize,
    stop_reason: StopReason,
    gradient_calls: Option<usize>,
    line_search_halvings: usize,
    certificate: &'a Certificate,
}

#[derive(Serialize)]
struct OuterSummary {
    index: usize,
    d_hat: f64,
    mu_d: f64,
    violation: f64,
    iterations: usize,
    e1: Option<f64>,
    e2: Option<f64>,
}

#[derive(Serialize)]
struct GuessCheckSummary<'a> {
    algorithm: &'static str,
    problem: &'a ProblemSpec,
    #[serde(rename = "D_hat_Y")]
    d_hat_y: f64,
    outer_count: usize,
    outer: Vec<OuterSummary>,
    certificate: &'a Certificate,
}

/// One row of the compare table.
#[derive(Debug, Clone, Serialize)]
struct CompareRow {
    algorithm: &'static str,
    iterations: usize,
    reached_target: bool,
    stop_reason: StopReason,
    e1: Option<f64>,
    e2: Option<f64>,
    gap_bound: Option<f64>,
    violation: Option<f64>,
    curvature_max: f64,
}

fn not_applicable(alg: AlgorithmName, g: &Generated) -> CliError {
    CliError::Config(format!("algorithm {alg} is not applicable to family {}", g.spec.family.name()))
}

/// Radii for the certificates: `(diam X, None)` in constrained mode, the
/// distances from the start points otherwise.
fn radii(g: &Generated) -> (Option<f64>, Option<f64>) {
    let saddle = |x: &acpd::BoxSet, y: &acpd::BoxSet| {
        let x0 = x.project(&RealVector::zeros(x.dim()));
        (radius(x, &x0).ok(), radius(y, &RealVector::zeros(y.dim())).ok())
    };
    match &g.instance {
        Instance::Saddle(p) if p.b().is_none() => saddle(p.f().domain(), p.g().domain()),
        Instance::SmoothSaddle(p) if p.b().is_none() => saddle(p.x_domain(), p.g().domain()),
        _ => (g.d_x(), None),
    }
}

fn stop_rule(cfg: &RunConfig, ctx: &Context, opts: &SolveOptions) -> Result<StopRule, CliError> {
    let max_iters = ctx.max_iters.unwrap_or(cfg.stop.max_iters);
    if let Some(eps) = cfg.stop.gap_eps {
        if opts.d_x.is_none() || opts.d_y.is_none() {
            return Err(CliError::Config("stop.gap_eps needs bounded X and Y".into()));
        }
        return Ok(StopRule::GapBound { eps, max_iters });
    }
    if let Some(eps1) = cfg.stop.eps1 {
        if opts.d_x.is_none() {
            return Err(CliError::Config("stop.eps1 needs a bounded X".into()));
        }
        let eps2 = cfg.stop.eps2.unwrap_or(f64::INFINITY);
        return Ok(StopRule::ErrorBounds { eps1, eps2, max_iters });
    }
    Ok(StopRule::MaxIters(max_iters))
}

fn solve_options(cfg: &RunConfig, ctx: &Context, g: &Generated) -> SolveOptions {
    let (d_x, d_y) = radii(g);
    let mut o = SolveOptions::default().with_seed(cfg.solve_seed).with_radii(d_x, d_y);
    o.trace_stride = cfg.trace_stride;
    if let Some(s) = ctx.seed {
        o.seed = s;
    }
    o
}

fn solve(alg: AlgorithmName, g: &Generated, cfg: &RunConfig, stop: StopRule, opts: &SolveOptions) -> Result<SolveReport, CliError> {
    let c = &cfg.scheduler;
    let smooth = || smooth_form(&g.instance).map_err(|_| not_applicable(alg, g));
    match (alg, &g.instance) {
        (AlgorithmName::AcPdhg, Instance::Saddle(p)) => Ok(pdhg::solve(p, c, stop, opts)?),
        (AlgorithmName::AcAdmm, Instance::TwoBlock(p)) => Ok(admm::solve(p, c, stop, opts)?),
        (AlgorithmName::AcApdhg, Instance::Saddle(_) | Instance::SmoothSaddle(_)) => match smooth()? {
            Instance::SmoothSaddle(p) => Ok(apdhg_solve(&p, c, stop, opts)?),
            _ => Err(not_applicable(alg, g)),
        },
        (AlgorithmName::AcAadmm, Instance::TwoBlock(_) | Instance::SmoothTwoBlock(_)) => match smooth()? {
            Instance::SmoothTwoBlock(p) => Ok(aadmm_solve(&p, c, stop, opts)?),
            _ => Err(not_applicable(alg, g)),
        },
        _ => Err(not_applicable(alg, g)),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_trace(path: &Path, rep: &SolveReport) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(&rep.trace, &mut buf)?;
    write_file(path, &buf)
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

fn certificate_file<'a>(alg: AlgorithmName, spec: &'a ProblemSpec, rep: &'a SolveReport) -> CertificateFile<'a> {
    CertificateFile {
        algorithm: alg.as_str(),
        problem: spec,
        iterations: rep.iterations,
        stop_reason: rep.stop_reason,
        gradient_calls: rep.gradient_calls,
        line_search_halvings: rep.line_search_halvings,
        certificate: &rep.certificate,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}

fn summary_lines(alg: AlgorithmName, g: &Generated, rep: &SolveReport) -> Vec<(String, String)> {
    let c = &rep.certificate;
    let s = &g.spec;
    let mut rows = vec![
        ("algorithm".to_string(), alg.to_string()),
        ("problem".into(), format!("{} n={} m={} seed={}", s.family.name(), s.n, s.m, s.seed)),
        ("iterations".into(), rep.iterations.to_string()),
        ("stop_reason".into(), serde_json::to_value(rep.stop_reason).unwrap().as_str().unwrap_or("").to_string()),
        ("curvature_max".into(), c.curvature_max.to_string()),
    ];
    for (name, v) in [
        ("gap_bound", c.gap_bound),
        ("e1", c.e1),
        ("e2", c.e2),
        ("violation", c.violation),
        ("identity_residual", c.identity_residual),
    ] {
        if let Some(x) = v {
            rows.push((name.into(), x.to_string()));
        }
    }
    rows
}

fn print_pairs(rows: &[(String, String)]) {
    let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<w$}  {v}");
    }
}

fn prepare(cfg: &RunConfig, ctx: &Context) -> Result<Generated, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let g = cfg.build_problem(&ctx.config_dir, ctx.seed)?;
    fs::create_dir_all(&ctx.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", ctx.out_dir.display())))?;
    Ok(g)
}

fn run_solver(alg: AlgorithmName, g: &Generated, cfg: &RunConfig, ctx: &Context, dir: &Path) -> Result<SolveReport, CliError> {
    let opts = solve_options(cfg, ctx, g);
    let stop = stop_rule(cfg, ctx, &opts)?;
    let rep = solve(alg, g, cfg, stop, &opts)?;
    fs::create_dir_all(dir)?;
    write_trace(&dir.join("trace.csv"), &rep)?;
    write_file(&dir.join("certificate.json"), &to_json(&certificate_file(alg, &g.spec, &rep))?)?;
    Ok(rep)
}

/// `run`: one algorithm, its trace, certificate and a summary on stdout.
pub fn run(cfg: &RunConfig, ctx: &Context) -> Result<(), CliError> {
    let algs = cfg.algorithm_list();
    let alg = match algs.as_slice() {
        [a] => *a,
        _ => return Err(CliError::Config("run takes exactly one algorithm; use compare for several".into())),
    };
    let g = prepare(cfg, ctx)?;
    if alg.is_guess_check() {
        return run_guess_check(alg, &g, cfg, ctx);
    }
    let rep = run_solver(alg, &g, cfg, ctx, &ctx.out_dir)?;
    print_pairs(&summary_lines(alg, &g, &rep));
    Ok(())
}

fn run_guess_check(alg: AlgorithmName, g: &Generated, cfg: &RunConfig, ctx: &Context) -> Result<(), CliError> {
    let sec = cfg.guess_check.as_ref().expect("validated");
    let d_x = sec
        .d_x
        .or_else(|| g.d_x())
        .ok_or_else(|| CliError::Config("guess-check needs a bounded X or guess_check.d_x".into()))?;
    let gc = GuessCheckConfig {
        d_hat0: sec.d_hat0,
        eps1: sec.eps1,
        eps2: sec.eps2,
        d_x,
        max_outer: sec.max_outer.unwrap_or(30),
        max_inner: ctx.max_iters.or(sec.max_inner).unwrap_or(200_000),
    };
    gc.validate()?;
    let mut opts = SolveOptions::default().with_seed(ctx.seed.unwrap_or(cfg.solve_seed));
    opts.trace_stride = cfg.trace_stride;
    let out: GuessCheckOutcome = match (alg, &g.instance) {
        (AlgorithmName::GuessCheckPdhg, Instance::Saddle(p)) if p.b().is_some() => guess_and_check_pdhg(p, &gc, &cfg.scheduler, &opts)?,
        (AlgorithmName::GuessCheckAdmm, Instance::TwoBlock(p)) => guess_and_check_admm(p, &gc, &cfg.scheduler, &opts)?,
        _ => return Err(not_applicable(alg, g)),
    };
    for r in &out.runs {
        write_trace(&ctx.out_dir.join(format!("trace_outer_{}.csv", r.index)), &r.report)?;
    }
    let sol = out.solution();
    write_file(&ctx.out_dir.join("certificate.json"), &to_json(&certificate_file(alg, &g.spec, sol))?)?;
    let summary = GuessCheckSummary {
        algorithm: alg.as_str(),
        problem: &g.spec,
        d_hat_y: out.d_hat_y,
        outer_count: out.outer_count,
        outer: out
            .runs
            .iter()
            .map(|r| OuterSummary {
                index: r.index,
                d_hat: r.d_hat,
                mu_d: r.mu_d,
                violation: r.violation,
                iterations: r.report.iterations,
                e1: r.report.certificate.e1,
                e2: r.report.certificate.e2,
            })
            .collect(),
        certificate: &sol.certificate,
    };
    write_file(&ctx.out_dir.join("summary.json"), &to_json(&summary)?)?;
    let mut rows = summary_lines(alg, g, sol);
    rows.insert(2, ("outer_count".into(), out.outer_count.to_string()));
    rows.insert(3, ("D_hat_Y".into(), out.d_hat_y.to_string()));
    print_pairs(&rows);
    Ok(())
}

fn aligned(rows: &[CompareRow]) -> String {
    let header = ["algorithm", "iterations", "reached", "e1", "e2", "gap_bound", "violation", "curvature_max"];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.algorithm.to_string(),
                r.iterations.to_string(),
                if r.reached_target { "yes".into() } else { "no".into() },
                fmt_opt(r.e1),
                fmt_opt(r.e2),
                fmt_opt(r.gap_bound),
                fmt_opt(r.violation),
                r.curvature_max.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|c| c[i].len()).chain([header[i].len()]).max().unwrap())
        .collect();
    let line = |c: Vec<&str>| {
        let parts: Vec<String> = c.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut s = line(header.to_vec());
    for c in &cells {
        s += &line(c.iter().map(String::as_str).collect());
    }
    s
}

/// `compare`: each algorithm in its own subdirectory plus a summary table.
pub fn compare(cfg: &RunConfig, ctx: &Context) -> Result<(), CliError> {
    let g = prepare(cfg, ctx)?;
    let algs = cfg.algorithm_list();
    if let Some(a) = algs.iter().find(|a| a.is_guess_check()) {
        return Err(CliError::Config(format!("compare covers the ac-* solvers, got {a}")));
    }
    let mut rows = Vec::new();
    for alg in algs {
        let rep = run_solver(alg, &g, cfg, ctx, &ctx.out_dir.join(alg.as_str()))?;
        let c = &rep.certificate;
        rows.push(CompareRow {
            algorithm: alg.as_str(),
            iterations: rep.iterations,
            reached_target: rep.stop_reason != StopReason::MaxIters,
            stop_reason: rep.stop_reason,
            e1: c.e1,
            e2: c.e2,
            gap_bound: c.gap_bound,
            violation: c.violation,
            curvature_max: c.curvature_max,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&ctx.out_dir.join("compare.csv"), &bytes)?;
    let table = aligned(&rows);
    write_file(&ctx.out_dir.join("compare.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}
