//! Sample paths of reflected SDEs `dX = theta f(X) dt + sigma dW + dL - dR`
//! on `[l, u]` or `[l, inf)`, built from Euler increments and a discrete
//! Skorokhod map.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};

use crate::drift::{DriftSpec, Interval};
use crate::error::{Error, Result};

/// Tolerance used for the per-step identity and complementarity checks.
pub const PATH_TOLERANCE: f64 = 1e-12;

/// Reflection domain: `[lower, upper]`, or `[lower, inf)` when `upper` is
/// absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    pub lower: f64,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BarrierKind {
    TwoSided,
    OneSided,
}

impl BarrierKind {
    pub fn name(self) -> &'static str {
        match self {
            BarrierKind::TwoSided => "two_sided",
            BarrierKind::OneSided => "one_sided",
        }
    }
}

impl fmt::Display for BarrierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BarrierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_sided" => Ok(BarrierKind::TwoSided),
            "one_sided" => Ok(BarrierKind::OneSided),
            _ => Err(Error::Config(format!(
                "unknown barrier kind `{s}`; expected two_sided or one_sided"
            ))),
        }
    }
}

impl BarrierConfig {
    pub fn two_sided(lower: f64, upper: f64) -> Result<Self> {
        let b = BarrierConfig {
            lower,
            upper: Some(upper),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn one_sided(lower: f64) -> Result<Self> {
        let b = BarrierConfig { lower, upper: None };
        b.validate()?;
        Ok(b)
    }

    /// Requires `0 <= l` and, when present, `l < u < inf`.
    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.lower >= 0.0) {
            return Err(Error::Invariant(format!(
                "lower barrier must satisfy 0 <= l < inf, got l = {}",
                self.lower
            )));
        }
        if let Some(u) = self.upper {
            if !(u.is_finite() && u > self.lower) {
                return Err(Error::Invariant(format!(
                    "barriers must satisfy l < u < inf, got l = {}, u = {u}",
                    self.lower
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> BarrierKind {
        if self.upper.is_some() {
            BarrierKind::TwoSided
        } else {
            BarrierKind::OneSided
        }
    }

    pub fn upper_or_inf(&self) -> f64 {
        self.upper.unwrap_or(f64::INFINITY)
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lower, self.upper_or_inf())
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper_or_inf()
    }

    /// Same lower barrier, upper barrier dropped.
    pub fn without_upper(&self) -> BarrierConfig {
        BarrierConfig {
            lower: self.lower,
            upper: None,
        }
    }
}

/// Time-stepping scheme for the reflected dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Euler–Maruyama step followed by the one-step Skorokhod clamp.
    #[default]
    Projection,
    /// Lépingle's scheme: the regulator increments are driven by exactly
    /// sampled extrema of the Brownian bridge over the step (minimum at
    /// `l`, maximum at `u`). A step whose bridge crosses both barriers is
    /// finished with the projection clamp.
    Lepingle,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Projection => "projection",
            Scheme::Lepingle => "lepingle",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(Scheme::Projection),
            "lepingle" => Ok(Scheme::Lepingle),
            _ => Err(Error::Config(format!(
                "unknown scheme `{s}`; expected projection or lepingle"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub drift: DriftSpec,
    pub theta: f64,
    pub sigma: f64,
    pub barriers: BarrierConfig,
    pub x0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        self.barriers.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        if !self.theta.is_finite() {
            return Err(Error::Config(format!("theta must be finite, got {}", self.theta)));
        }
        if !self.barriers.contains(self.x0) {
            return Err(Error::Invariant(format!(
                "initial state x0 = {} must lie in [{}, {}]",
                self.x0,
                self.barriers.lower,
                self.barriers.upper_or_inf()
            )));
        }
        Ok(())
    }
}

/// Result of projecting one unconstrained state onto the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkorokhodStep {
    pub x: f64,
    pub dl: f64,
    pub dr: f64,
    /// The free state landed more than one domain width beyond a barrier.
    pub overshoot: bool,
}

/// One-step discrete Skorokhod map: the minimal `(dl, dr) >= 0` placing
/// `x_free + dl - dr` in the domain, with `dl > 0` only at `l` and
/// `dr > 0` only at `u`.
pub fn skorokhod_step(x_free: f64, barriers: &BarrierConfig) -> SkorokhodStep {
    let l = barriers.lower;
    match barriers.upper {
        None => {
            if x_free < l {
                SkorokhodStep { x: l, dl: l - x_free, dr: 0.0, overshoot: false }
            } else {
                SkorokhodStep { x: x_free, dl: 0.0, dr: 0.0, overshoot: false }
            }
        }
        Some(u) => {
            let width = u - l;
            if x_free < l {
                SkorokhodStep { x: l, dl: l - x_free, dr: 0.0, overshoot: x_free < l - width }
            } else if x_free > u {
                SkorokhodStep { x: u, dl: 0.0, dr: x_free - u, overshoot: x_free > u + width }
            } else {
                SkorokhodStep { x: x_free, dl: 0.0, dr: 0.0, overshoot: false }
            }
        }
    }
}

/// A simulated or loaded reflected path on a time grid with `n + 1` points.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPath {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// Lower regulator increments, `n` entries.
    pub dl: Vec<f64>,
    /// Upper regulator increments, `n` entries.
    pub dr: Vec<f64>,
    /// Brownian increments (variance `dt`); absent for paths loaded from disk.
    pub dw: Option<Vec<f64>>,
    pub scheme: Scheme,
    /// Steps whose free state overshot past the opposite barrier.
    pub overshoots: usize,
}

impl ReflectedPath {
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn cumulative_l(&self) -> Vec<f64> {
        cumulative(&self.dl)
    }

    pub fn cumulative_r(&self) -> Vec<f64> {
        cumulative(&self.dr)
    }

    /// Rebuilds a path from cumulative regulator columns. Increments are
    /// successive differences, which is also how the simulator defines
    /// them, so a save/load cycle reproduces every field bit for bit.
    pub fn from_cumulative(
        times: Vec<f64>,
        states: Vec<f64>,
        l_cum: &[f64],
        r_cum: &[f64],
    ) -> Result<ReflectedPath> {
        let n = states.len();
        if n < 2 || times.len() != n || l_cum.len() != n || r_cum.len() != n {
            return Err(Error::Invariant(format!(
                "path columns must share a length of at least 2 (t: {}, x: {}, L: {}, R: {})",
                times.len(),
                n,
                l_cum.len(),
                r_cum.len()
            )));
        }
        if l_cum[0] != 0.0 || r_cum[0] != 0.0 {
            return Err(Error::Invariant(
                "row 0: regulators must start at L_0 = R_0 = 0".into(),
            ));
        }
        Ok(ReflectedPath {
            times,
            states,
            dl: l_cum.windows(2).map(|w| w[1] - w[0]).collect(),
            dr: r_cum.windows(2).map(|w| w[1] - w[0]).collect(),
            dw: None,
            scheme: Scheme::Projection,
            overshoots: 0,
        })
    }

    /// Checks state containment, regulator sign, grid monotonicity and
    /// (for projection paths) discrete complementarity. The error names
    /// the first offending row.
    pub fn check_invariants(&self, barriers: &BarrierConfig) -> Result<()> {
        let l = barriers.lower;
        let u = barriers.upper_or_inf();
        for (i, &x) in self.states.iter().enumerate() {
            if !barriers.contains(x) {
                return Err(Error::Invariant(format!(
                    "row {i}: state {x} outside [{l}, {u}]"
                )));
            }
        }
        for (i, w) in self.times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::Invariant(format!(
                    "row {}: time grid not increasing",
                    i + 1
                )));
            }
        }
        for i in 0..self.n_steps() {
            let (dl, dr) = (self.dl[i], self.dr[i]);
            if !(dl >= 0.0) || !(dr >= 0.0) {
                return Err(Error::Invariant(format!(
                    "row {}: regulator increments must be nonnegative (dL = {dl}, dR = {dr})",
                    i + 1
                )));
            }
            if barriers.upper.is_none() && dr != 0.0 {
                return Err(Error::Invariant(format!(
                    "row {}: dR = {dr} on a one-sided domain",
                    i + 1
                )));
            }
            if self.scheme == Scheme::Projection {
                let x = self.states[i + 1];
                if dl > 0.0 && (x - l).abs() > PATH_TOLERANCE {
                    return Err(Error::Invariant(format!(
                        "row {}: complementarity violated, dL = {dl} > 0 at interior state {x}",
                        i + 1
                    )));
                }
                if dr > 0.0 && (u - x).abs() > PATH_TOLERANCE {
                    return Err(Error::Invariant(format!(
                        "row {}: complementarity violated, dR = {dr} > 0 at interior state {x}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest per-step residual of
    /// `X_{i+1} - X_i - theta f(X_i) dt - sigma dW_i - dL_i + dR_i`.
    /// Requires recorded Brownian increments.
    pub fn skorokhod_residual(&self, drift: &DriftSpec, theta: f64, sigma: f64, dt: f64) -> Option<f64> {
        let dw = self.dw.as_ref()?;
        let mut worst = 0.0f64;
        for (i, &w) in dw.iter().enumerate() {
            let x = self.states[i];
            let free = x + theta * drift.eval(x) * dt + sigma * w;
            worst = worst.max((self.states[i + 1] - (free + self.dl[i] - self.dr[i])).abs());
        }
        Some(worst)
    }
}

fn cumulative(incs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(incs.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for &d in incs {
        acc += d;
        out.push(acc);
    }
    out
}

/// Running regulator that stores increments as differences of its own
/// cumulative value.
struct Regulator {
    total: f64,
}

impl Regulator {
    fn push(&mut self, inc: f64) -> f64 {
        let next = self.total + inc;
        let eff = next - self.total;
        self.total = next;
        eff
    }
}

/// One transition produced by [`Stepper`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// State at the start of the step.
    pub from: f64,
    /// State at the end of the step.
    pub to: f64,
    pub dl: f64,
    pub dr: f64,
    pub dw: f64,
    pub overshoot: bool,
}

/// Streaming simulator: yields the `n_steps` transitions of the path
/// described by a [`SimConfig`] without storing them.
pub struct Stepper<'a> {
    config: &'a SimConfig,
    rng: ChaCha8Rng,
    x: f64,
    remaining: usize,
    sqrt_dt: f64,
    lepingle: bool,
    lower: Regulator,
    upper: Regulator,
}

impl<'a> Stepper<'a> {
    pub fn new(config: &'a SimConfig) -> Result<Self> {
        config.validate()?;
        Ok(Stepper {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            x: config.x0,
            remaining: config.n_steps,
            sqrt_dt: config.dt.sqrt(),
            lepingle: config.scheme == Scheme::Lepingle,
            lower: Regulator { total: 0.0 },
            upper: Regulator { total: 0.0 },
        })
    }
}

impl Iterator for Stepper<'_> {
    type Item = Transition;

    fn next(&mut self) -> Option<Transition> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let c = self.config;
        let x = self.x;
        let z: f64 = self.rng.sample(StandardNormal);
        let w = self.sqrt_dt * z;
        let free = x + (c.theta * c.drift.eval(x) * c.dt + c.sigma * w);
        let step = if self.lepingle {
            // Extrema over the step of the Brownian bridge from x to free.
            let jump = free - x;
            let spread = |rng: &mut ChaCha8Rng| {
                let v: f64 = rng.sample(Open01);
                (jump * jump - 2.0 * c.sigma * c.sigma * c.dt * v.ln()).sqrt()
            };
            let bridge_min = 0.5 * (x + free - spread(&mut self.rng));
            let push_up = (c.barriers.lower - bridge_min).max(0.0);
            let push_down = match c.barriers.upper {
                Some(u) => (0.5 * (x + free + spread(&mut self.rng)) - u).max(0.0),
                None => 0.0,
            };
            let rest = skorokhod_step(free + push_up - push_down, &c.barriers);
            SkorokhodStep {
                x: rest.x,
                dl: push_up + rest.dl,
                dr: push_down + rest.dr,
                overshoot: rest.overshoot,
            }
        } else {
            skorokhod_step(free, &c.barriers)
        };
        self.x = step.x;
        Some(Transition {
            from: x,
            to: step.x,
            dl: self.lower.push(step.dl),
            dr: self.upper.push(step.dr),
            dw: w,
            overshoot: step.overshoot,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Simulates the reflected SDE on the domain given by `config.barriers`
/// (one- or two-sided). Deterministic in `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<ReflectedPath> {
    let stepper = Stepper::new(config)?;
    let scheme = config.scheme;
    let n = config.n_steps;
    let mut path = ReflectedPath {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        dl: Vec::with_capacity(n),
        dr: Vec::with_capacity(n),
        dw: None,
        scheme,
        overshoots: 0,
    };
    let mut dw = Vec::with_capacity(n);
    path.times.push(0.0);
    path.states.push(config.x0);
    for (i, step) in stepper.enumerate() {
        path.times.push((i + 1) as f64 * config.dt);
        path.states.push(step.to);
        path.dl.push(step.dl);
        path.dr.push(step.dr);
        dw.push(step.dw);
        path.overshoots += usize::from(step.overshoot);
    }
    path.dw = Some(dw);
    Ok(path)
}

/// Simulates on `[l, inf)`; rejects configurations with an upper barrier.
pub fn simulate_one_sided(config: &SimConfig) -> Result<ReflectedPath> {
    if let Some(u) = config.barriers.upper {
        return Err(Error::Config(format!(
            "simulate_one_sided requires no upper barrier, got u = {u}"
        )));
    }
    simulate(config)
}

/// Applies the discrete Skorokhod map to a sequence of unconstrained
/// increments, returning `(states, dl, dr)`.
pub fn skorokhod_decompose(x0: f64, free_increments: &[f64], barriers: &BarrierConfig) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut states = Vec::with_capacity(free_increments.len() + 1);
    let mut dl = Vec::with_capacity(free_increments.len());
    let mut dr = Vec::with_capacity(free_increments.len());
    let mut lower = Regulator { total: 0.0 };
    let mut upper = Regulator { total: 0.0 };
    let mut x = x0;
    states.push(x);
    for &inc in free_increments {
        let step = skorokhod_step(x + inc, barriers);
        dl.push(lower.push(step.dl));
        dr.push(upper.push(step.dr));
        x = step.x;
        states.push(x);
    }
    (states, dl, dr)
}
