//! Closed-form drift estimators from a (discretized) continuous record.
//!
//! Both the maximum-likelihood and least-squares estimators reduce to
//!
//! ```text
//! theta_hat = sum f(X_i) (X_{i+1} - X_i - dL_i + dR_i) / sum f(X_i)^2 dt_i
//! ```
//!
//! with left-endpoint (Itô) sums. The method only changes the label.

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::reflection::ReflectedPath;

/// Below this value of `sum f^2 dt` the estimate is refused.
pub const DENOM_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mle,
    Lse,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mle => "MLE",
            Method::Lse => "LSE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MLE" => Ok(Method::Mle),
            "LSE" => Ok(Method::Lse),
            _ => Err(Error::Config(format!("unknown method `{s}`; expected MLE or LSE"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub theta_hat: f64,
    pub method: Method,
    /// Observation horizon `T`.
    pub horizon: f64,
    /// `sum f(X_i)^2 dt_i`
    pub denom: f64,
    /// `sum f(X_i) (dX_i - dL_i + dR_i)`
    pub numer: f64,
    /// `denom / T`
    pub plug_in_f: f64,
    pub sigma: f64,
    /// `sigma / sqrt(denom)`
    pub std_error: f64,
    pub ci_level: f64,
    pub ci: (f64, f64),
}

/// The two sufficient sums of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSums {
    pub numer: f64,
    pub denom: f64,
    pub horizon: f64,
}

pub fn path_sums(path: &ReflectedPath, drift: &DriftSpec) -> Result<PathSums> {
    let n = path.n_steps();
    if n == 0 || path.dl.len() != n || path.dr.len() != n || path.times.len() != n + 1 {
        return Err(Error::Invariant("path arrays have inconsistent lengths".into()));
    }
    let mut numer = 0.0;
    let mut denom = 0.0;
    for i in 0..n {
        let x = path.states[i];
        let f = drift.eval(x);
        let dt = path.times[i + 1] - path.times[i];
        numer += f * (path.states[i + 1] - x - path.dl[i] + path.dr[i]);
        denom += f * f * dt;
    }
    if !(denom > DENOM_THRESHOLD) {
        return Err(Error::DegeneratePath {
            denom,
            threshold: DENOM_THRESHOLD,
        });
    }
    Ok(PathSums {
        numer,
        denom,
        horizon: path.horizon(),
    })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!("sigma must be finite and nonnegative, got {sigma}")));
    }
    Ok(())
}

fn check_level(ci_level: f64) -> Result<()> {
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(Error::Config(format!("ci_level must lie in (0, 1), got {ci_level}")));
    }
    Ok(())
}

/// Estimates `theta` from a path with known diffusion coefficient `sigma`.
pub fn estimate(path: &ReflectedPath, drift: &DriftSpec, sigma: f64, method: Method, ci_level: f64) -> Result<EstimateResult> {
    check_sigma(sigma)?;
    check_level(ci_level)?;
    let sums = path_sums(path, drift)?;
    let theta_hat = sums.numer / sums.denom;
    let mut result = EstimateResult {
        theta_hat,
        method,
        horizon: sums.horizon,
        denom: sums.denom,
        numer: sums.numer,
        plug_in_f: sums.denom / sums.horizon,
        sigma,
        std_error: sigma / sums.denom.sqrt(),
        ci_level,
        ci: (theta_hat, theta_hat),
    };
    result.ci = confidence_interval(&result)?;
    Ok(result)
}

/// `theta_hat -/+ z_{(1+level)/2} sigma / sqrt(denom)`.
pub fn confidence_interval(result: &EstimateResult) -> Result<(f64, f64)> {
    check_level(result.ci_level)?;
    let z = normal_quantile(0.5 * (1.0 + result.ci_level));
    let half = z * result.sigma / result.denom.sqrt();
    Ok((result.theta_hat - half, result.theta_hat + half))
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Normalized log-likelihood ratio against `theta = 0`:
/// `(1/T) [ (theta/sigma^2) numer - (theta^2 / (2 sigma^2)) denom ]`.
pub fn log_likelihood(path: &ReflectedPath, drift: &DriftSpec, sigma: f64, theta: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("log-likelihood needs sigma > 0, got {sigma}")));
    }
    let s = path_sums(path, drift)?;
    let s2 = sigma * sigma;
    Ok((theta / s2 * s.numer - theta * theta / (2.0 * s2) * s.denom) / s.horizon)
}

/// Quadratic-variation estimate
/// `sigma_hat^2 = sum (dX - dL + dR)^2 / T`, for records without a
/// known diffusion coefficient.
pub fn quadratic_variation_sigma(path: &ReflectedPath) -> f64 {
    let qv: f64 = (0..path.n_steps())
        .map(|i| {
            let d = path.states[i + 1] - path.states[i] - path.dl[i] + path.dr[i];
            d * d
        })
        .sum();
    (qv / path.horizon()).sqrt()
}

/// `sum f(X_i) dW_i`, the discretized martingale term. Requires recorded
/// Brownian increments.
pub fn martingale_sum(path: &ReflectedPath, drift: &DriftSpec) -> Option<f64> {
    let dw = path.dw.as_ref()?;
    Some((0..path.n_steps()).map(|i| drift.eval(path.states[i]) * dw[i]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::builtin_drift;
    use crate::reflection::{simulate, BarrierConfig, Scheme, SimConfig};
    use proptest::prelude::*;

    fn path(drift: &str, theta: f64, sigma: f64, n: usize, seed: u64) -> (SimConfig, ReflectedPath) {
        let c = SimConfig {
            drift: builtin_drift(drift).unwrap(),
            theta,
            sigma,
            barriers: BarrierConfig::two_sided(0.0, 3.0).unwrap(),
            x0: 1.2,
            dt: 0.1,
            n_steps: n,
            seed,
            scheme: Scheme::Projection,
        };
        let p = simulate(&c).unwrap();
        (c, p)
    }

    #[test]
    fn noise_free_recovery() {
        let c = SimConfig {
            drift: builtin_drift("linear").unwrap(),
            theta: 1.7,
            sigma: 0.0,
            barriers: BarrierConfig::two_sided(0.0, 3.0).unwrap(),
            x0: 2.0,
            dt: 0.01,
            n_steps: 200,
            seed: 1,
            scheme: Scheme::Projection,
        };
        let p = simulate(&c).unwrap();
        let r = estimate(&p, &c.drift, 1.0, Method::Mle, 0.95).unwrap();
        assert!((r.theta_hat - 1.7).abs() < c.dt);
    }

    #[test]
    fn mle_equals_lse_bitwise() {
        let (c, p) = path("sin2pi", 1.0, 2.0, 500, 3);
        let a = estimate(&p, &c.drift, 2.0, Method::Mle, 0.95).unwrap();
        let b = estimate(&p, &c.drift, 2.0, Method::Lse, 0.95).unwrap();
        assert_eq!(a.theta_hat.to_bits(), b.theta_hat.to_bits());
        assert_eq!(a.method, Method::Mle);
        assert_eq!(b.method, Method::Lse);
    }

    #[test]
    fn result_fields_consistent() {
        let (c, p) = path("sqrt", 2.0, 2.0, 500, 5);
        let r = estimate(&p, &c.drift, 2.0, Method::Lse, 0.9).unwrap();
        assert_eq!(r.theta_hat, r.numer / r.denom);
        assert!((r.std_error - (4.0 / r.plug_in_f / r.horizon).sqrt()).abs() < 1e-14);
        let mid = 0.5 * (r.ci.0 + r.ci.1);
        assert!((mid - r.theta_hat).abs() < 1e-14);
        assert!((r.horizon - 50.0).abs() < 1e-12);
    }

    #[test]
    fn ci_half_width_example() {
        let r = EstimateResult {
            theta_hat: 0.0,
            method: Method::Mle,
            horizon: 50.0,
            denom: 100.0,
            numer: 0.0,
            plug_in_f: 2.0,
            sigma: 2.0,
            std_error: 0.2,
            ci_level: 0.95,
            ci: (0.0, 0.0),
        };
        let (lo, hi) = confidence_interval(&r).unwrap();
        assert!((hi - 0.392).abs() < 1e-4 && (lo + 0.392).abs() < 1e-4);
        let bad = EstimateResult { ci_level: 1.0, ..r };
        assert_eq!(confidence_interval(&bad).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn wider_ci_on_shorter_horizon() {
        let (c, short) = path("sin2pi", 1.0, 2.0, 100, 11);
        let (_, long) = path("sin2pi", 1.0, 2.0, 500, 11);
        let a = estimate(&short, &c.drift, 2.0, Method::Mle, 0.95).unwrap();
        let b = estimate(&long, &c.drift, 2.0, Method::Mle, 0.95).unwrap();
        assert!(a.ci.1 - a.ci.0 > b.ci.1 - b.ci.0);
    }

    #[test]
    fn degenerate_path_rejected() {
        // sin(2 pi x) vanishes at x0 = 1 and nothing moves.
        let c = SimConfig {
            drift: builtin_drift("sin2pi").unwrap(),
            theta: 0.0,
            sigma: 0.0,
            barriers: BarrierConfig::two_sided(0.0, 3.0).unwrap(),
            x0: 1.0,
            dt: 0.1,
            n_steps: 10,
            seed: 0,
            scheme: Scheme::Projection,
        };
        let p = simulate(&c).unwrap();
        assert!(matches!(estimate(&p, &c.drift, 1.0, Method::Mle, 0.95), Err(Error::DegeneratePath { .. })));
    }

    #[test]
    fn log_likelihood_properties() {
        let (c, p) = path("sin2pi", 1.0, 2.0, 500, 9);
        assert_eq!(log_likelihood(&p, &c.drift, 2.0, 0.0).unwrap(), 0.0);
        let r = estimate(&p, &c.drift, 2.0, Method::Mle, 0.95).unwrap();
        let at = |t: f64| log_likelihood(&p, &c.drift, 2.0, t).unwrap();
        assert!(at(r.theta_hat + 0.1) < at(r.theta_hat));
        assert!(at(r.theta_hat - 0.1) < at(r.theta_hat));
        let step = 1e-4;
        let best = (-40_000..=40_000)
            .map(|k| k as f64 * step)
            .max_by(|a, b| at(*a).total_cmp(&at(*b)))
            .unwrap();
        assert!((best - r.theta_hat).abs() <= step);
    }

    #[test]
    fn martingale_identity() {
        // numer - theta0 denom - sigma sum f dW = 0 at the discrete level.
        for seed in 0..20 {
            let (c, p) = path("sin2pi", 1.0, 2.0, 500, seed);
            let s = path_sums(&p, &c.drift).unwrap();
            let m = martingale_sum(&p, &c.drift).unwrap();
            assert!((s.numer - c.theta * s.denom - c.sigma * m).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_variation_recovers_sigma() {
        let (_, p) = path("sin2pi", 1.0, 2.0, 20_000, 4);
        assert!((quadratic_variation_sigma(&p) - 2.0).abs() < 0.05);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("mle".parse::<Method>().unwrap(), Method::Mle);
        assert_eq!("LSE".parse::<Method>().unwrap(), Method::Lse);
        assert!("ols".parse::<Method>().is_err());
    }

    proptest! {
        #[test]
        fn scale_equivariance(seed in any::<u64>(), c in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0]) {
            let (cfg, p) = path("sin2pi", 1.0, 2.0, 200, seed);
            let scaled = cfg.drift.scaled(c);
            let a = estimate(&p, &cfg.drift, 2.0, Method::Mle, 0.95).unwrap();
            let b = estimate(&p, &scaled, 2.0, Method::Mle, 0.95).unwrap();
            prop_assert!((b.theta_hat - a.theta_hat / c).abs() <= 1e-10 * (1.0 + a.theta_hat.abs()));
        }
    }
}
