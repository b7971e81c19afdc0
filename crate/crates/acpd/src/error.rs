use thiserror::Error;

/// Errors raised by operators, oracles, schedulers and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("function values are not evaluable for this oracle")]
    NotEvaluable,
    #[error("divergence: non-finite iterate at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("no initial stepsize: seed norm is zero and no eta1 was supplied")]
    MissingStepsize,
    #[error("initial line search exceeded {0} halvings")]
    LineSearchExhausted(usize),
    #[error("certificates need k >= 3, got k = {0}")]
    TooFewIterations(usize),
    #[error("guess-and-check exhausted {outer} outer loops (last D_hat = {d_hat}, last violation = {violation})")]
    GuessCheckExhausted {
        outer: usize,
        d_hat: f64,
        violation: f64,
    },
    #[error("inner solve hit the iteration cap {0} before the error bounds were met")]
    InnerIterationCap(usize),
    #[error("problem generation failed: {0}")]
    Generation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-friendly name of the error variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::OracleUnavailable(_) => "OracleUnavailable",
            Error::NotEvaluable => "NotEvaluable",
            Error::Divergence { .. } => "Divergence",
            Error::MissingStepsize => "MissingStepsize",
            Error::LineSearchExhausted(_) => "LineSearchExhausted",
            Error::TooFewIterations(_) => "TooFewIterations",
            Error::GuessCheckExhausted { .. } => "GuessCheckExhausted",
            Error::InnerIterationCap(_) => "InnerIterationCap",
            Error::Generation(_) => "Generation",
            Error::Unsupported(_) => "Unsupported",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
