//! Simulation of reflected stochastic differential equations
//! `dX = theta f(X) dt + sigma dW + dL - dR` with one or two barriers, and
//! closed-form maximum-likelihood / least-squares estimation of `theta`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod drift;
pub mod error;
pub mod estimators;
pub mod invariant;
pub mod io;
pub mod montecarlo;
pub mod quadrature;
pub mod reflection;

pub use drift::{builtin_drift, BuiltinDrift, DriftSpec, Interval};
pub use error::{Error, Result};
pub use estimators::{estimate, log_likelihood, EstimateResult, Method};
pub use invariant::{
    asymptotic_variance, information_f, invariant_density, InvariantDensity, SignConvention,
    DEFAULT_SIGN_CONVENTION,
};
pub use montecarlo::{run_experiment, ExperimentConfig, McSummary};
pub use reflection::{
    simulate, simulate_one_sided, skorokhod_step, BarrierConfig, BarrierKind, ReflectedPath,
    Scheme, SimConfig,
};
