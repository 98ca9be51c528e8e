//! Replicated simulate-then-estimate experiments and the diagnostics
//! checking consistency and asymptotic normality of the estimator.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::drift::{builtin_drift, DriftSpec};
use crate::error::{Error, Result};
use crate::estimators::{estimate, martingale_sum, EstimateResult, Method};
use crate::invariant::{information_f, invariant_density, SignConvention, DEFAULT_SIGN_CONVENTION};
use crate::reflection::{simulate, BarrierConfig, BarrierKind, ReflectedPath, Scheme, SimConfig};

/// Share of dropped replicates above which a summary is flagged.
pub const DROP_FLAG_FRACTION: f64 = 0.01;
/// Minimum sample size for the normality diagnostic.
pub const MIN_NORMALITY_SAMPLES: usize = 100;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub drift_name: String,
    pub theta0: Vec<f64>,
    pub sigma: f64,
    /// Two-sided barriers; the one-sided kind drops the upper barrier.
    pub barriers: BarrierConfig,
    pub barrier_kinds: Vec<BarrierKind>,
    pub n_list: Vec<usize>,
    pub dt: f64,
    pub replicates: usize,
    pub base_seed: u64,
    pub ci_level: f64,
    pub x0: f64,
    pub scheme: Scheme,
    pub sign_convention: SignConvention,
}

impl ExperimentConfig {
    /// Reference study layout: `sigma = 2`, `[0, 3]`,
    /// `theta0 in {1, 2}`, `n in {100, 200, 500}`, `N = 1000`, both
    /// barrier kinds, `dt = 0.1`.
    pub fn table_defaults(drift_name: &str) -> Self {
        ExperimentConfig {
            drift_name: drift_name.to_string(),
            theta0: vec![1.0, 2.0],
            sigma: 2.0,
            barriers: BarrierConfig {
                lower: 0.0,
                upper: Some(3.0),
            },
            barrier_kinds: vec![BarrierKind::TwoSided, BarrierKind::OneSided],
            n_list: vec![100, 200, 500],
            dt: 0.1,
            replicates: 1000,
            base_seed: 2023,
            ci_level: 0.95,
            x0: 1.5,
            scheme: Scheme::Projection,
            sign_convention: DEFAULT_SIGN_CONVENTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        builtin_drift(&self.drift_name)?;
        self.barriers.validate()?;
        if self.replicates < 2 {
            return Err(Error::Config(format!("replicates must be at least 2, got {}", self.replicates)));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "n_list must be nonempty, positive and strictly increasing, got {:?}",
                self.n_list
            )));
        }
        if self.theta0.is_empty() || self.theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("theta0 must be a nonempty list of finite values".into()));
        }
        if self.barrier_kinds.is_empty() {
            return Err(Error::Config("barrier_kinds must not be empty".into()));
        }
        if self.barrier_kinds.contains(&BarrierKind::TwoSided) && self.barriers.upper.is_none() {
            return Err(Error::Config("two_sided runs need an upper barrier".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!("ci_level must lie in (0, 1), got {}", self.ci_level)));
        }
        if !self.barriers.contains(self.x0) {
            return Err(Error::Invariant(format!(
                "x0 = {} must lie in [{}, {}]",
                self.x0,
                self.barriers.lower,
                self.barriers.upper_or_inf()
            )));
        }
        Ok(())
    }

    fn barriers_for(&self, kind: BarrierKind) -> BarrierConfig {
        match kind {
            BarrierKind::TwoSided => self.barriers,
            BarrierKind::OneSided => self.barriers.without_upper(),
        }
    }
}

/// Outcome of one replicate.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    /// `None` when the path was degenerate and dropped.
    pub estimate: Option<EstimateResult>,
    /// `(1/T) sum f(X_i) dW_i`
    pub martingale_average: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct McSummary {
    pub drift: String,
    pub theta0: f64,
    pub barrier_kind: BarrierKind,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Replicates requested (`N`).
    pub replicates: usize,
    pub replicates_used: usize,
    pub dropped: usize,
    /// More than 1% of replicates were dropped.
    pub flagged: bool,
    pub bias: f64,
    /// Sample standard deviation, `N - 1` convention.
    pub std_dev: f64,
    /// Mean of `(theta_hat - theta0)^2`.
    pub mse: f64,
    pub ci_coverage: f64,
    /// KS distance of standardized errors to N(0, 1); `None` when `F` is
    /// unavailable (non-integrable one-sided law) or too few replicates.
    pub ks_statistic: Option<f64>,
    /// Quadrature value of `F` used for standardization.
    pub information: Option<f64>,
    pub martingale_mean: f64,
    pub martingale_std: f64,
}

#[derive(Debug, Clone)]
pub struct McRun {
    pub summary: McSummary,
    pub records: Vec<ReplicateRecord>,
}

fn run_replicate(base: &SimConfig, index: usize, base_seed: u64, ci_level: f64) -> Result<ReplicateRecord> {
    let seed = base_seed.wrapping_add(index as u64);
    let config = SimConfig { seed, ..base.clone() };
    let path = simulate(&config)?;
    match estimate(&path, &config.drift, config.sigma, Method::Mle, ci_level) {
        Ok(est) => Ok(ReplicateRecord {
            index,
            seed,
            estimate: Some(est),
            martingale_average: martingale_sum(&path, &config.drift).map(|m| m / path.horizon()),
        }),
        Err(Error::DegeneratePath { .. }) => Ok(ReplicateRecord {
            index,
            seed,
            estimate: None,
            martingale_average: None,
        }),
        Err(e) => Err(e),
    }
}

fn information_for(drift: &DriftSpec, theta: f64, sigma: f64, barriers: &BarrierConfig, sign: SignConvention) -> Option<f64> {
    let density = invariant_density(drift, theta, sigma, barriers, sign).ok()?;
    information_f(&density).ok()
}

/// Runs every `(theta0, barrier kind, n)` cell of the experiment. Output
/// order is theta0, then barrier kind, then n, as listed in the config.
/// Replicate `r` always uses seed `base_seed + r`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<McRun>> {
    config.validate()?;
    let drift = builtin_drift(&config.drift_name)?;
    let mut runs = Vec::new();
    for &theta0 in &config.theta0 {
        for &kind in &config.barrier_kinds {
            let barriers = config.barriers_for(kind);
            let information = information_for(&drift, theta0, config.sigma, &barriers, config.sign_convention);
            for &n in &config.n_list {
                let base = SimConfig {
                    drift: drift.clone(),
                    theta: theta0,
                    sigma: config.sigma,
                    barriers,
                    x0: config.x0,
                    dt: config.dt,
                    n_steps: n,
                    seed: config.base_seed,
                    scheme: config.scheme,
                };
                let records = (0..config.replicates)
                    .into_par_iter()
                    .map(|r| run_replicate(&base, r, config.base_seed, config.ci_level))
                    .collect::<Result<Vec<_>>>()?;
                let summary = summarize(&config.drift_name, theta0, kind, n, config.dt, information, &records)?;
                runs.push(McRun { summary, records });
            }
        }
    }
    Ok(runs)
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Assembles bias, standard deviation, MSE, coverage and the normality
/// statistic for one experiment cell.
pub fn summarize(
    drift: &str,
    theta0: f64,
    kind: BarrierKind,
    n: usize,
    dt: f64,
    information: Option<f64>,
    records: &[ReplicateRecord],
) -> Result<McSummary> {
    let estimates: Vec<EstimateResult> = records.iter().filter_map(|r| r.estimate).collect();
    let errors: Vec<f64> = estimates.iter().map(|e| e.theta_hat - theta0).collect();
    let used = estimates.len();
    let dropped = records.len() - used;
    let (bias, std_dev) = mean_and_sd(&errors);
    let mse = if used == 0 {
        f64::NAN
    } else {
        errors.iter().map(|e| e * e).sum::<f64>() / used as f64
    };
    let ci_coverage = if used == 0 {
        f64::NAN
    } else {
        estimates.iter().filter(|e| e.ci.0 <= theta0 && theta0 <= e.ci.1).count() as f64 / used as f64
    };
    let sigma = estimates.first().map(|e| e.sigma).unwrap_or(0.0);
    let ks_statistic = match information {
        Some(f) if used >= MIN_NORMALITY_SAMPLES && sigma > 0.0 => Some(normality_diagnostic(&estimates, theta0, f, sigma)?),
        _ => None,
    };
    let mart: Vec<f64> = records.iter().filter_map(|r| r.martingale_average).collect();
    let (martingale_mean, martingale_std) = mean_and_sd(&mart);
    Ok(McSummary {
        drift: drift.to_string(),
        theta0,
        barrier_kind: kind,
        n,
        dt,
        horizon: n as f64 * dt,
        replicates: records.len(),
        replicates_used: used,
        dropped,
        flagged: dropped as f64 > DROP_FLAG_FRACTION * records.len() as f64,
        bias,
        std_dev,
        mse,
        ci_coverage,
        ks_statistic,
        information,
        martingale_mean,
        martingale_std,
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `values` and
/// the standard normal. Sorts `values` in place.
pub fn ks_distance_standard_normal(values: &mut [f64]) -> f64 {
    let normal = Normal::standard();
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = normal.cdf(z);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Standardizes `z_r = sqrt(T) (theta_hat_r - theta0) sqrt(F) / sigma` and
/// returns its KS distance to N(0, 1).
pub fn normality_diagnostic(estimates: &[EstimateResult], theta0: f64, information: f64, sigma: f64) -> Result<f64> {
    if estimates.len() < MIN_NORMALITY_SAMPLES {
        return Err(Error::Config(format!(
            "normality diagnostic needs at least {MIN_NORMALITY_SAMPLES} estimates, got {}",
            estimates.len()
        )));
    }
    let horizon = estimates[0].horizon;
    if estimates.iter().any(|e| (e.horizon - horizon).abs() > 1e-9 * horizon) {
        return Err(Error::Config("normality diagnostic needs a common horizon T".into()));
    }
    if !(information > 0.0 && sigma > 0.0) {
        return Err(Error::Config("normality diagnostic needs F > 0 and sigma > 0".into()));
    }
    let scale = horizon.sqrt() * information.sqrt() / sigma;
    let mut z: Vec<f64> = estimates.iter().map(|e| scale * (e.theta_hat - theta0)).collect();
    Ok(ks_distance_standard_normal(&mut z))
}

/// `|(1/T) int f^2(X) dt - F| / F` along one path.
pub fn ergodic_diagnostic(path: &ReflectedPath, drift: &DriftSpec, f_quadrature: f64) -> f64 {
    let n = path.n_steps();
    let integral: f64 = (0..n)
        .map(|i| {
            let f = drift.eval(path.states[i]);
            f * f * (path.times[i + 1] - path.times[i])
        })
        .sum();
    (integral / path.horizon() - f_quadrature).abs() / f_quadrature
}

/// Streaming version of [`ergodic_diagnostic`] that never stores the path.
pub fn ergodic_time_average<B: Fn(f64) -> f64>(config: &SimConfig, b: B) -> Result<f64> {
    let mut acc = 0.0;
    for step in crate::reflection::Stepper::new(config)? {
        acc += b(step.from);
    }
    Ok(acc / config.n_steps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn fake(theta_hat: f64, horizon: f64) -> EstimateResult {
        EstimateResult {
            theta_hat,
            method: Method::Mle,
            horizon,
            denom: 1.0,
            numer: theta_hat,
            plug_in_f: 1.0 / horizon,
            sigma: 1.0,
            std_error: 1.0,
            ci_level: 0.95,
            ci: (theta_hat - 1.0, theta_hat + 1.0),
        }
    }

    #[test]
    fn ks_null_calibration() {
        // Under H0 the 5% critical distance 1.36/sqrt(N) is exceeded rarely.
        let n = 500;
        let crit = 1.36 / (n as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let exceed = (0..200)
            .filter(|_| {
                let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                ks_distance_standard_normal(&mut z) > crit
            })
            .count();
        assert!(exceed <= 20, "{exceed} of 200 exceeded");
    }

    #[test]
    fn identical_estimates_fail_normality() {
        let est = vec![fake(1.0, 50.0); 200];
        let d = normality_diagnostic(&est, 1.0, 0.5, 2.0).unwrap();
        assert!((d - 0.5).abs() < 1e-2);
    }

    #[test]
    fn normality_rejects_mixed_horizons_and_small_samples() {
        let mut est = vec![fake(1.0, 50.0); 150];
        est.push(fake(1.0, 10.0));
        assert_eq!(normality_diagnostic(&est, 1.0, 0.5, 2.0).unwrap_err().exit_code(), 2);
        assert!(normality_diagnostic(&est[..50], 1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn degenerate_replicates_are_dropped_and_flagged() {
        let mut cfg = ExperimentConfig::table_defaults("sin2pi");
        cfg.theta0 = vec![0.0];
        cfg.sigma = 0.0;
        cfg.x0 = 1.0;
        cfg.replicates = 2;
        cfg.n_list = vec![10];
        cfg.barrier_kinds = vec![BarrierKind::TwoSided];
        let runs = run_experiment(&cfg).unwrap();
        assert_eq!(runs.len(), 1);
        let s = &runs[0].summary;
        assert_eq!(s.dropped, 2);
        assert_eq!(s.replicates_used, 0);
        assert!(s.flagged);
    }

    #[test]
    fn summary_mse_identity() {
        let mut cfg = ExperimentConfig::table_defaults("sqrt");
        cfg.replicates = 50;
        cfg.theta0 = vec![1.0];
        let runs = run_experiment(&cfg).unwrap();
        assert_eq!(runs.len(), 6);
        for run in &runs {
            let s = &run.summary;
            let n = s.replicates_used as f64;
            let rhs = s.bias * s.bias + s.std_dev * s.std_dev * (n - 1.0) / n;
            assert!((s.mse - rhs).abs() < 1e-12, "{} vs {}", s.mse, rhs);
        }
    }

    #[test]
    fn experiment_is_reproducible_and_order_independent() {
        let mut cfg = ExperimentConfig::table_defaults("sin2pi");
        cfg.replicates = 40;
        cfg.theta0 = vec![1.0];
        cfg.n_list = vec![100];
        let a = run_experiment(&cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_experiment(&cfg).unwrap());
        for (x, y) in a.iter().zip(&b) {
            for (r, s) in x.records.iter().zip(&y.records) {
                assert_eq!(r.estimate.unwrap().theta_hat.to_bits(), s.estimate.unwrap().theta_hat.to_bits());
            }
            assert_eq!(x.summary.bias.to_bits(), y.summary.bias.to_bits());
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::table_defaults("sin2pi");
        cfg.n_list = vec![200, 100];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::table_defaults("sin2pi");
        cfg.replicates = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::table_defaults("nope");
        cfg.replicates = 10;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn one_sided_sin2pi_has_no_information() {
        let mut cfg = ExperimentConfig::table_defaults("sin2pi");
        cfg.replicates = 120;
        cfg.theta0 = vec![1.0];
        cfg.n_list = vec![100];
        let runs = run_experiment(&cfg).unwrap();
        assert!(runs[0].summary.ks_statistic.is_some());
        assert!(runs[1].summary.ks_statistic.is_none());
        assert!(runs[1].summary.information.is_none());
    }
}
