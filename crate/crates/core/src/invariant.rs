//! Stationary density of the reflected diffusion, the information
//! functional `F = int f^2 pi`, and the asymptotic estimator variance.

use std::fmt;

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::reflection::{BarrierConfig, SimConfig, Stepper};

/// `ln(1e16)`: the one-sided domain is truncated once the unnormalized
/// density falls below `1e-16` of its running maximum.
const TAIL_LOG_DROP: f64 = 36.841_361_487_904_734;
/// The tail search gives up beyond `l + TAIL_SEARCH_LIMIT`.
const TAIL_SEARCH_LIMIT: f64 = 1e9;
const QUAD_PIECES: usize = 64;
const SHIFT_GRID: usize = 2049;
const MIN_INFORMATION: f64 = 1e-14;

/// Sign applied to the exponent `-(2 theta / sigma^2) int_l^x f`.
///
/// `Positive` keeps that exponent as written; `Negative` flips it to
/// `+(2 theta / sigma^2) int_l^x f`, the stationary solution of the
/// forward equation for drift `+theta f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignConvention {
    Positive,
    Negative,
}

/// Convention picked by the long-run histogram oracle for every builtin
/// drift (see `tests/sign_convention.rs`).
pub const DEFAULT_SIGN_CONVENTION: SignConvention = SignConvention::Negative;

impl SignConvention {
    pub const BOTH: [SignConvention; 2] = [SignConvention::Positive, SignConvention::Negative];

    pub fn factor(self) -> f64 {
        match self {
            SignConvention::Positive => 1.0,
            SignConvention::Negative => -1.0,
        }
    }

    pub fn from_factor(v: i64) -> Result<Self> {
        match v {
            1 => Ok(SignConvention::Positive),
            -1 => Ok(SignConvention::Negative),
            _ => Err(Error::Config(format!(
                "sign_convention must be +1 or -1, got {v}"
            ))),
        }
    }
}

impl fmt::Display for SignConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignConvention::Positive => f.write_str("+1"),
            SignConvention::Negative => f.write_str("-1"),
        }
    }
}

/// Normalized stationary density on `[l, u]` or (truncated) `[l, inf)`.
#[derive(Debug, Clone)]
pub struct InvariantDensity {
    barriers: BarrierConfig,
    drift: DriftSpec,
    theta: f64,
    sigma: f64,
    sign: SignConvention,
    /// Right end of the integration range: `u`, or the tail cut.
    support_end: f64,
    log_normalizer: f64,
    breaks: Vec<f64>,
}

/// Builds the stationary density
/// `pi(x) = exp(s * -(2 theta/sigma^2) int_l^x f) / Z` with `s` the sign
/// convention. One-sided domains must pass a numerical tail test.
pub fn invariant_density(
    drift: &DriftSpec,
    theta: f64,
    sigma: f64,
    barriers: &BarrierConfig,
    sign: SignConvention,
) -> Result<InvariantDensity> {
    barriers.validate()?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    if !theta.is_finite() {
        return Err(Error::Config(format!("theta must be finite, got {theta}")));
    }
    let l = barriers.lower;
    let coef = sign.factor() * (-2.0 * theta / (sigma * sigma));
    let exponent = |x: f64| -> Result<f64> { Ok(coef * drift.integral(l, x)?) };

    let support_end = match barriers.upper {
        Some(u) => u,
        None => tail_cut(&exponent, l)?,
    };

    let breaks: Vec<f64> = (0..=QUAD_PIECES)
        .map(|k| {
            if k == QUAD_PIECES {
                support_end
            } else {
                l + (support_end - l) * k as f64 / QUAD_PIECES as f64
            }
        })
        .collect();

    let mut shift = f64::NEG_INFINITY;
    for k in 0..SHIFT_GRID {
        let x = l + (support_end - l) * k as f64 / (SHIFT_GRID - 1) as f64;
        shift = shift.max(exponent(x)?);
    }
    let scaled = quadrature::integrate_with_breaks(
        |x| (exponent(x).unwrap_or(f64::NAN) - shift).exp(),
        &breaks,
        Tolerance::default(),
    )?;
    if !(scaled.value > 0.0) {
        return Err(Error::Numerical(format!(
            "stationary normalizer is not positive ({:e})",
            scaled.value
        )));
    }

    Ok(InvariantDensity {
        barriers: *barriers,
        drift: drift.clone(),
        theta,
        sigma,
        sign,
        support_end,
        log_normalizer: shift + scaled.value.ln(),
        breaks,
    })
}

/// Walks outward from `l` in doubling strides until the exponent has
/// dropped `TAIL_LOG_DROP` below its running maximum at two consecutive
/// stride ends.
fn tail_cut(exponent: &dyn Fn(f64) -> Result<f64>, l: f64) -> Result<f64> {
    let mut max_seen = exponent(l)?;
    let mut prev = l;
    let mut stride = 0.25;
    let mut below = 0;
    while stride <= TAIL_SEARCH_LIMIT {
        let end = l + stride;
        for k in 1..=32 {
            let x = prev + (end - prev) * k as f64 / 32.0;
            let e = exponent(x)?;
            if e.is_nan() {
                return Err(Error::Numerical(format!("stationary exponent is NaN at x = {x}")));
            }
            max_seen = max_seen.max(e);
        }
        if exponent(end)? < max_seen - TAIL_LOG_DROP {
            below += 1;
            if below == 2 {
                return Ok(end);
            }
        } else {
            below = 0;
        }
        prev = end;
        stride *= 2.0;
    }
    Err(Error::Divergence(format!(
        "tail test failed: unnormalized density never falls below 1e-16 of its maximum on [{l}, {}]; \
         the drift does not confine the process under this sign convention",
        l + TAIL_SEARCH_LIMIT
    )))
}

impl InvariantDensity {
    pub fn barriers(&self) -> &BarrierConfig {
        &self.barriers
    }

    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sign_convention(&self) -> SignConvention {
        self.sign
    }

    /// Right end of the numerical support (`u`, or the tail cut).
    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    /// The denominator integral. May overflow to `inf` for steep drifts;
    /// use [`Self::log_normalizer`] in that case.
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Density at `x`; zero outside the domain.
    pub fn density(&self, x: f64) -> f64 {
        if !self.barriers.contains(x) {
            return 0.0;
        }
        let coef = self.sign.factor() * (-2.0 * self.theta / (self.sigma * self.sigma));
        match self.drift.integral(self.barriers.lower, x) {
            Ok(a) => (coef * a - self.log_normalizer).exp(),
            Err(_) => f64::NAN,
        }
    }

    /// `E[b(X_inf)] = int b pi` over the numerical support.
    pub fn expectation<B: Fn(f64) -> f64>(&self, b: B) -> Result<f64> {
        Ok(quadrature::integrate_with_breaks(|x| b(x) * self.density(x), &self.breaks, Tolerance::default())?.value)
    }

    /// Stationary CDF at every point of the sorted grid `xs`.
    pub fn cdf_on_grid(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let l = self.barriers.lower;
        let mut out = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        let mut last = l;
        for &x in xs {
            let x = x.clamp(l, self.support_end);
            if x < last {
                return Err(Error::Config("cdf grid must be sorted".into()));
            }
            if x > last {
                acc += quadrature::integrate(|y| self.density(y), last, x, Tolerance::default())?.value;
                last = x;
            }
            out.push(acc.min(1.0));
        }
        Ok(out)
    }

    /// Kolmogorov distance between the empirical law of `samples` and this
    /// density. The stationary CDF is tabulated on `table_points` nodes and
    /// interpolated linearly.
    pub fn kolmogorov_distance(&self, samples: &mut [f64], table_points: usize) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Config("no samples".into()));
        }
        let l = self.barriers.lower;
        let h = (self.support_end - l) / (table_points - 1) as f64;
        let nodes: Vec<f64> = (0..table_points).map(|k| l + k as f64 * h).collect();
        let table = self.cdf_on_grid(&nodes)?;
        let cdf = |x: f64| -> f64 {
            if x <= l {
                return 0.0;
            }
            if x >= self.support_end {
                return 1.0;
            }
            let pos = (x - l) / h;
            let k = (pos.floor() as usize).min(table_points - 2);
            let frac = pos - k as f64;
            table[k] + frac * (table[k + 1] - table[k])
        };
        samples.sort_unstable_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mut d = 0.0f64;
        let mut i = 0;
        while i < samples.len() {
            let x = samples[i];
            let mut j = i + 1;
            while j < samples.len() && samples[j] == x {
                j += 1;
            }
            let f = cdf(x);
            d = d.max((i as f64 / n - f).abs()).max((j as f64 / n - f).abs());
            i = j;
        }
        Ok(d)
    }
}

/// `F = int f^2 pi`. Errors when `F` is numerically zero.
pub fn information_f(density: &InvariantDensity) -> Result<f64> {
    let f = density.expectation(|x| {
        let v = density.drift().eval(x);
        v * v
    })?;
    if !(f >= MIN_INFORMATION) {
        return Err(Error::DegenerateDrift(f));
    }
    Ok(f)
}

/// Asymptotic variance `sigma^2 / F` of `sqrt(T) (theta_hat - theta_0)`.
pub fn asymptotic_variance(information: f64, sigma: f64) -> Result<f64> {
    if !(information > 0.0 && information.is_finite()) {
        return Err(Error::Config(format!("F must be positive, got {information}")));
    }
    Ok(sigma * sigma / information)
}

/// Long-run simulation used to arbitrate the sign convention.
#[derive(Debug, Clone, Copy)]
pub struct HistogramOracle {
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub table_points: usize,
}

impl Default for HistogramOracle {
    fn default() -> Self {
        HistogramOracle {
            horizon: 5000.0,
            dt: 1e-3,
            seed: 20_240_101,
            table_points: 4001,
        }
    }
}

impl HistogramOracle {
    /// States `X_1..X_n` of one long path started at `x0`, excluding
    /// states pinned exactly on a barrier by the projection step. The
    /// continuous process spends zero time on the barriers, so those
    /// atoms are a discretization artifact.
    pub fn sample_states(
        &self,
        drift: &DriftSpec,
        theta: f64,
        sigma: f64,
        barriers: &BarrierConfig,
        x0: f64,
    ) -> Result<Vec<f64>> {
        let config = SimConfig {
            drift: drift.clone(),
            theta,
            sigma,
            barriers: *barriers,
            x0,
            dt: self.dt,
            n_steps: (self.horizon / self.dt).round() as usize,
            seed: self.seed,
            scheme: Default::default(),
        };
        let upper = barriers.upper_or_inf();
        Ok(Stepper::new(&config)?
            .map(|s| s.to)
            .filter(|&x| x != barriers.lower && x != upper)
            .collect())
    }
}

/// Outcome of comparing both sign conventions against a simulated path.
#[derive(Debug, Clone, Copy)]
pub struct SignSelection {
    pub selected: SignConvention,
    /// Kolmogorov distance for `+1`; `inf` if that density is not integrable.
    pub distance_positive: f64,
    /// Kolmogorov distance for `-1`; `inf` if that density is not integrable.
    pub distance_negative: f64,
}

impl SignSelection {
    pub fn distance(&self, sign: SignConvention) -> f64 {
        match sign {
            SignConvention::Positive => self.distance_positive,
            SignConvention::Negative => self.distance_negative,
        }
    }
}

/// Picks the sign convention whose density is closer, in Kolmogorov
/// distance, to the empirical law of one long simulated path.
pub fn select_sign_convention(
    drift: &DriftSpec,
    theta: f64,
    sigma: f64,
    barriers: &BarrierConfig,
    x0: f64,
    oracle: &HistogramOracle,
) -> Result<SignSelection> {
    let states = oracle.sample_states(drift, theta, sigma, barriers, x0)?;
    let mut dist = [f64::INFINITY; 2];
    for (slot, sign) in dist.iter_mut().zip(SignConvention::BOTH) {
        match invariant_density(drift, theta, sigma, barriers, sign) {
            Ok(d) => {
                let mut buf = states.clone();
                *slot = d.kolmogorov_distance(&mut buf, oracle.table_points)?;
            }
            Err(Error::Divergence(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if dist.iter().all(|d| d.is_infinite()) {
        return Err(Error::Divergence(
            "neither sign convention yields an integrable density".into(),
        ));
    }
    Ok(SignSelection {
        selected: if dist[0] < dist[1] {
            SignConvention::Positive
        } else {
            SignConvention::Negative
        },
        distance_positive: dist[0],
        distance_negative: dist[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{builtin_drift, BuiltinDrift};
    use std::f64::consts::PI;

    fn two_sided() -> BarrierConfig {
        BarrierConfig::two_sided(0.0, 3.0).unwrap()
    }

    fn total_mass(d: &InvariantDensity) -> f64 {
        // Independent plain GK pass over the support, without the stored breaks.
        let l = d.barriers().lower;
        let end = d.support_end();
        let pieces = 300;
        (0..pieces)
            .map(|k| {
                let a = l + (end - l) * k as f64 / pieces as f64;
                let b = l + (end - l) * (k + 1) as f64 / pieces as f64;
                quadrature::integrate(|x| d.density(x), a, b, Tolerance::default()).unwrap().value
            })
            .sum()
    }

    #[test]
    fn theta_zero_is_uniform() {
        for drift in BuiltinDrift::ALL {
            for sign in SignConvention::BOTH {
                let d = invariant_density(&drift.spec(), 0.0, 2.0, &two_sided(), sign).unwrap();
                for k in 0..=30 {
                    assert!((d.density(k as f64 * 0.1) - 1.0 / 3.0).abs() < 1e-14);
                }
                assert!((d.normalizer() - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_drift_gives_truncated_gaussian() {
        let d = invariant_density(&builtin_drift("linear").unwrap(), 1.0, 2.0, &two_sided(), SignConvention::Negative)
            .unwrap();
        // Integral of exp(-x^2/4) on [0, 3] = sqrt(pi) erf(3/2), from mpmath.
        let z = 1.712_376_787_249_802_1;
        assert!((d.normalizer() - z).abs() < 1e-10);
        for x in [0.0, 0.7, 1.9, 3.0] {
            assert!((d.density(x) - (-x * x / 4.0f64).exp() / z).abs() < 1e-12);
        }
        assert_eq!(d.density(3.5), 0.0);
    }

    #[test]
    fn densities_are_normalized_and_positive() {
        for drift in BuiltinDrift::ALL {
            for theta in [-2.0, -1.0, 1.0, 2.0] {
                for sign in SignConvention::BOTH {
                    let d = invariant_density(&drift.spec(), theta, 2.0, &two_sided(), sign).unwrap();
                    assert!((total_mass(&d) - 1.0).abs() < 1e-8, "{drift} {theta} {sign}");
                    assert!((0..100).all(|k| d.density(0.015 + 0.03 * k as f64) > 0.0));
                }
            }
        }
    }

    #[test]
    fn steep_drift_does_not_overflow() {
        let d = invariant_density(&builtin_drift("sqrt").unwrap(), 200.0, 0.5, &two_sided(), SignConvention::Negative)
            .unwrap();
        assert!(d.log_normalizer().is_finite());
        assert!((total_mass(&d) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn information_uniform_targets() {
        let sin = invariant_density(&builtin_drift("sin2pi").unwrap(), 0.0, 2.0, &two_sided(), DEFAULT_SIGN_CONVENTION)
            .unwrap();
        assert!((information_f(&sin).unwrap() - 0.5).abs() < 1e-10);
        let sq = invariant_density(&builtin_drift("sqrt").unwrap(), 0.0, 2.0, &two_sided(), DEFAULT_SIGN_CONVENTION)
            .unwrap();
        assert!((information_f(&sq).unwrap() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn information_is_even_in_f() {
        let f = builtin_drift("sqrt").unwrap();
        let g = f.scaled(-1.0);
        // theta f = (-theta)(-f): same process, same F.
        let a = invariant_density(&f, 1.0, 2.0, &two_sided(), DEFAULT_SIGN_CONVENTION).unwrap();
        let b = invariant_density(&g, -1.0, 2.0, &two_sided(), DEFAULT_SIGN_CONVENTION).unwrap();
        let (fa, fb) = (information_f(&a).unwrap(), information_f(&b).unwrap());
        assert!((fa - fb).abs() < 1e-10 * fa);
    }

    #[test]
    fn degenerate_drift_rejected() {
        let zero = DriftSpec::new("zero", |_| 0.0, 1.0, crate::drift::Interval::new(0.0, 3.0))
            .with_primitive(|_| 0.0);
        let d = invariant_density(&zero, 1.0, 2.0, &two_sided(), DEFAULT_SIGN_CONVENTION).unwrap();
        assert!(matches!(information_f(&d), Err(Error::DegenerateDrift(_))));
    }

    #[test]
    fn asymptotic_variance_examples() {
        assert_eq!(asymptotic_variance(0.5, 2.0).unwrap(), 8.0);
        assert!((asymptotic_variance(1.5, 2.0).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert!(asymptotic_variance(0.0, 2.0).is_err());
    }

    #[test]
    fn one_sided_confining_drift_is_half_gaussian() {
        let b = BarrierConfig::one_sided(0.0).unwrap();
        let d = invariant_density(&builtin_drift("linear").unwrap(), 1.0, 2.0, &b, SignConvention::Negative).unwrap();
        // exp(-x^2/4) on [0, inf) integrates to sqrt(pi).
        assert!((d.normalizer() - PI.sqrt()).abs() < 1e-9);
        // E[X^2] of the half-normal with variance sigma^2/(2 theta) = 2.
        assert!((information_f(&d).unwrap() - 2.0).abs() < 1e-9);
        assert!((total_mass(&d) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn one_sided_non_confining_drift_diverges() {
        let b = BarrierConfig::one_sided(0.0).unwrap();
        let err = invariant_density(&builtin_drift("sin2pi").unwrap(), 1.0, 2.0, &b, SignConvention::Negative)
            .unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
        assert_eq!(err.exit_code(), 4);
        let err = invariant_density(&builtin_drift("sqrt").unwrap(), 1.0, 2.0, &b, SignConvention::Negative)
            .unwrap_err();
        assert!(err.to_string().contains("1e-16"));
        assert!(invariant_density(&builtin_drift("sqrt").unwrap(), -1.0, 2.0, &b, SignConvention::Negative).is_ok());
    }

    #[test]
    fn user_drift_without_primitive_matches_closed_form() {
        let with = builtin_drift("sqrt").unwrap();
        let without = DriftSpec::new("sqrt_q", f64::sqrt, 500.0, crate::drift::Interval::new(0.0, f64::INFINITY));
        let a = invariant_density(&with, 1.0, 2.0, &two_sided(), SignConvention::Negative).unwrap();
        let b = invariant_density(&without, 1.0, 2.0, &two_sided(), SignConvention::Negative).unwrap();
        for x in [0.1, 1.0, 2.9] {
            assert!((a.density(x) - b.density(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn kolmogorov_distance_handles_atoms() {
        let d = invariant_density(&builtin_drift("sin2pi").unwrap(), 0.0, 2.0, &two_sided(), DEFAULT_SIGN_CONVENTION)
            .unwrap();
        let mut exact: Vec<f64> = (0..3000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
        assert!(d.kolmogorov_distance(&mut exact, 301).unwrap() < 1e-3);
        let mut atom = vec![0.0; 10];
        assert!((d.kolmogorov_distance(&mut atom, 301).unwrap() - 1.0).abs() < 1e-12);
    }
}
