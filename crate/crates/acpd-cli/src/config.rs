//! Run configuration: a versioned JSON document.

use std::fmt;
use std::path::{Path, PathBuf};

use acpd::problems::{generate, Generated, ProblemDocument, ProblemSpec};
use acpd::scheduler::SchedulerConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    AcPdhg,
    AcAdmm,
    AcApdhg,
    AcAadmm,
    GuessCheckPdhg,
    GuessCheckAdmm,
}

impl AlgorithmName {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmName::AcPdhg => "ac-pdhg",
            AlgorithmName::AcAdmm => "ac-admm",
            AlgorithmName::AcApdhg => "ac-apdhg",
            AlgorithmName::AcAadmm => "ac-aadmm",
            AlgorithmName::GuessCheckPdhg => "guess-check-pdhg",
            AlgorithmName::GuessCheckAdmm => "guess-check-admm",
        }
    }

    pub fn is_guess_check(&self) -> bool {
        matches!(self, AlgorithmName::GuessCheckPdhg | AlgorithmName::GuessCheckAdmm)
    }
}

impl fmt::Display for AlgorithmName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A generator spec inline, or a replayable problem document on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    File { file: PathBuf },
    Spec(ProblemSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Stop once the bounded-gap bound reaches this value.
    #[serde(default)]
    pub gap_eps: Option<f64>,
    /// Stop once `E1 <= eps1` and `min{violation, E2} <= eps2`.
    #[serde(default)]
    pub eps1: Option<f64>,
    #[serde(default)]
    pub eps2: Option<f64>,
}

fn default_max_iters() -> usize {
    1000
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            gap_eps: None,
            eps1: None,
            eps2: None,
        }
    }
}

/// Guess-and-check settings; `d_x` defaults to the diameter of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessCheckSection {
    pub d_hat0: f64,
    pub eps1: f64,
    pub eps2: f64,
    #[serde(default)]
    pub d_x: Option<f64>,
    #[serde(default)]
    pub max_outer: Option<usize>,
    #[serde(default)]
    pub max_inner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub problem: ProblemSource,
    #[serde(default)]
    pub algorithm: Option<AlgorithmName>,
    /// Used by `compare`; `algorithm` alone is a one-entry list.
    #[serde(default)]
    pub algorithms: Vec<AlgorithmName>,
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub guess_check: Option<GuessCheckSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub trace_stride: Option<usize>,
    /// Seed of the solver's unit probe.
    #[serde(default)]
    pub solve_seed: u64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config does not parse: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// Every algorithm the config asks for, `algorithm` first.
    pub fn algorithm_list(&self) -> Vec<AlgorithmName> {
        let mut out: Vec<AlgorithmName> = self.algorithm.into_iter().collect();
        for a in &self.algorithms {
            if !out.contains(a) {
                out.push(*a);
            }
        }
        out
    }

    /// Checks everything that does not need the problem built.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        self.scheduler.validate().map_err(|e| e.to_string())?;
        if self.algorithm_list().is_empty() {
            return Err("no algorithm given".into());
        }
        if self.stop.max_iters == 0 {
            return Err("stop.max_iters must be positive".into());
        }
        if self.trace_stride == Some(0) {
            return Err("trace_stride must be positive".into());
        }
        if self.stop.gap_eps.is_some() && (self.stop.eps1.is_some() || self.stop.eps2.is_some()) {
            return Err("stop takes gap_eps or eps1/eps2, not both".into());
        }
        if self.stop.eps2.is_some() && self.stop.eps1.is_none() {
            return Err("stop.eps2 needs stop.eps1".into());
        }
        for v in [self.stop.gap_eps, self.stop.eps1, self.stop.eps2].into_iter().flatten() {
            if !(v > 0.0) {
                return Err(format!("stop tolerances must be positive, got {v}"));
            }
        }
        if self.algorithm_list().iter().any(|a| a.is_guess_check()) && self.guess_check.is_none() {
            return Err("guess-check algorithms need a guess_check section".into());
        }
        Ok(())
    }

    /// Builds the problem; `seed` replaces the problem seed.
    pub fn build_problem(&self, base: &Path, seed: Option<u64>) -> Result<Generated, acpd::Error> {
        match &self.problem {
            ProblemSource::Spec(spec) => {
                let mut spec = spec.clone();
                if let Some(s) = seed {
                    spec.seed = s;
                }
                generate(&spec)
            }
            ProblemSource::File { file } => {
                let path = if file.is_absolute() { file.clone() } else { base.join(file) };
                let text = std::fs::read_to_string(&path).map_err(|e| acpd::Error::Io(format!("{}: {e}", path.display())))?;
                match seed {
                    None => ProblemDocument::replay(&text),
                    Some(s) => {
                        let doc: ProblemDocument = serde_json::from_str(&text).map_err(|e| acpd::Error::Parse(e.to_string()))?;
                        generate(&ProblemSpec { seed: s, ..doc.spec })
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "problem": {"family": "constrained-qp", "n": 6, "m": 3, "seed": 2},
        "algorithm": "ac-pdhg",
        "scheduler": {"mu_d": 0.1}
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.stop, StopConfig::default());
        assert_eq!(c.algorithm_list(), vec![AlgorithmName::AcPdhg]);
        assert_eq!(c.scheduler.alpha, 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn file_source_and_unknown_fields() {
        let c = RunConfig::parse(&MINIMAL.replace(r#"{"family": "constrained-qp", "n": 6, "m": 3, "seed": 2}"#, r#"{"file": "p.json"}"#)).unwrap();
        assert_eq!(c.problem, ProblemSource::File { file: "p.json".into() });
        assert!(RunConfig::parse(&MINIMAL.replace("\"algorithm\"", "\"algo\"")).is_err());
    }

    #[test]
    fn validation_messages() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.scheduler.alpha = 1.5;
        assert!(c.validate().unwrap_err().contains("alpha out of range"));
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.schema_version = 2;
        assert!(c.validate().unwrap_err().contains("schema_version"));
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.algorithm = Some(AlgorithmName::GuessCheckPdhg);
        assert!(c.validate().unwrap_err().contains("guess_check"));
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.stop.eps2 = Some(0.1);
        assert!(c.validate().is_err());
    }
}
