//! Auto-conditioned primal-dual solvers for bilinear saddle-point and linearly
//! constrained convex problems.
//!
//! Stepsizes come from local estimates of the operator norm (and, for the
//! accelerated variants, of the gradient Lipschitz constant) taken along the
//! iterates; no global constants are needed.

pub mod accel;
pub mod admm;
pub mod certify;
pub mod driver;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod oracles;
pub mod pdhg;
pub mod problems;
pub mod scheduler;
pub mod trace;

pub use error::{Error, Result};
pub use linalg::{BoxSet, LinearMap, RealVector};
