//! Drift functions `f` with the metadata simulation, estimation and the
//! invariant-measure quadrature rely on.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Lower end of the interval on which the stored Lipschitz bound of
/// `sqrt` holds. The square root is not Lipschitz at 0.
pub const SQRT_LIPSCHITZ_FLOOR: f64 = 1e-6;

/// Closed interval `[lo, hi]`; `hi` may be `+inf`, `lo` may be `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// `n` equally spaced points including both endpoints.
    fn grid(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let h = (self.hi - self.lo) / (n - 1) as f64;
        (0..n).map(move |k| if k + 1 == n { self.hi } else { self.lo + k as f64 * h })
    }
}

/// Builtin drift shapes accepted by name in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinDrift {
    /// `f(x) = sin(2 pi x)`
    Sin2Pi,
    /// `f(x) = sqrt(x)`
    Sqrt,
    /// `f(x) = -x`, a reflected Ornstein–Uhlenbeck drift.
    Linear,
}

impl BuiltinDrift {
    pub const ALL: [BuiltinDrift; 3] = [BuiltinDrift::Sin2Pi, BuiltinDrift::Sqrt, BuiltinDrift::Linear];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinDrift::Sin2Pi => "sin2pi",
            BuiltinDrift::Sqrt => "sqrt",
            BuiltinDrift::Linear => "linear",
        }
    }

    pub fn spec(self) -> DriftSpec {
        match self {
            BuiltinDrift::Sin2Pi => DriftSpec::new(
                "sin2pi",
                |x| (2.0 * PI * x).sin(),
                2.0 * PI,
                Interval::new(f64::NEG_INFINITY, f64::INFINITY),
            )
            .with_primitive(|x| (1.0 - (2.0 * PI * x).cos()) / (2.0 * PI)),
            BuiltinDrift::Sqrt => DriftSpec::new(
                "sqrt",
                f64::sqrt,
                0.5 / SQRT_LIPSCHITZ_FLOOR.sqrt(),
                Interval::new(0.0, f64::INFINITY),
            )
            .with_primitive(|x| 2.0 / 3.0 * x * x.sqrt())
            .with_note("Lipschitz bound holds on [1e-6, inf) only; sqrt is not Lipschitz at 0"),
            BuiltinDrift::Linear => DriftSpec::new(
                "linear",
                |x| -x,
                1.0,
                Interval::new(f64::NEG_INFINITY, f64::INFINITY),
            )
            .with_primitive(|x| -0.5 * x * x),
        }
    }
}

impl fmt::Display for BuiltinDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinDrift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuiltinDrift::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown drift `{s}`; valid names are {{sin2pi, sqrt, linear}}"
                ))
            })
    }
}

/// Looks up a builtin drift by its configuration name.
pub fn builtin_drift(name: &str) -> Result<DriftSpec> {
    Ok(name.parse::<BuiltinDrift>()?.spec())
}

/// A named drift function `f` together with a Lipschitz bound and an
/// optional closed-form primitive.
#[derive(Clone)]
pub struct DriftSpec {
    name: String,
    eval: ScalarFn,
    primitive: Option<ScalarFn>,
    lipschitz_bound: f64,
    domain: Interval,
    note: Option<String>,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("name", &self.name)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("domain", &self.domain)
            .field("has_primitive", &self.primitive.is_some())
            .finish()
    }
}

impl DriftSpec {
    pub fn new<F>(name: impl Into<String>, eval: F, lipschitz_bound: f64, domain: Interval) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        DriftSpec {
            name: name.into(),
            eval: Arc::new(eval),
            primitive: None,
            lipschitz_bound,
            domain,
            note: None,
        }
    }

    /// Attaches any primitive `P` with `P' = f`; only differences
    /// `P(x) - P(l)` are ever used.
    pub fn with_primitive<F>(mut self, primitive: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.primitive = Some(Arc::new(primitive));
        self
    }

    pub fn with_lipschitz_bound(mut self, bound: f64) -> Self {
        self.lipschitz_bound = bound;
        self
    }

    fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }

    /// `c * f`, with primitive and Lipschitz bound scaled accordingly.
    pub fn scaled(&self, c: f64) -> DriftSpec {
        let eval = Arc::clone(&self.eval);
        let mut out = DriftSpec {
            name: format!("{c}*{}", self.name),
            eval: Arc::new(move |x| c * eval(x)),
            primitive: None,
            lipschitz_bound: c.abs() * self.lipschitz_bound,
            domain: self.domain,
            note: self.note.clone(),
        };
        if let Some(p) = &self.primitive {
            let p = Arc::clone(p);
            out.primitive = Some(Arc::new(move |x| c * p(x)));
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// Caveat attached to the Lipschitz metadata, if any.
    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    pub fn has_antiderivative(&self) -> bool {
        self.primitive.is_some()
    }

    /// Closed-form `int_l^x f(y) dy`, when a primitive is attached.
    pub fn antiderivative(&self, l: f64, x: f64) -> Option<f64> {
        self.primitive.as_ref().map(|p| p(x) - p(l))
    }

    /// `int_l^x f(y) dy`, from the primitive when present, else by
    /// adaptive quadrature.
    pub fn integral(&self, l: f64, x: f64) -> Result<f64> {
        match self.antiderivative(l, x) {
            Some(v) => Ok(v),
            None => Ok(quadrature::integrate(|y| self.eval(y), l, x, Tolerance::default())?.value),
        }
    }
}

/// Checks the Lipschitz bound on adjacent pairs of a uniform grid over
/// `domain`: every difference quotient must be at most
/// `lipschitz_bound * (1 + 1e-9)`.
pub fn validate_lipschitz(spec: &DriftSpec, domain: Interval, grid_points: usize) -> Result<bool> {
    Ok(max_difference_quotient(spec, domain, grid_points)?
        <= spec.lipschitz_bound() * (1.0 + 1e-9))
}

/// Largest `|f(x_{k+1}) - f(x_k)| / (x_{k+1} - x_k)` on a uniform grid.
pub fn max_difference_quotient(spec: &DriftSpec, domain: Interval, grid_points: usize) -> Result<f64> {
    if grid_points < 2 {
        return Err(Error::Config("grid_points must be at least 2".into()));
    }
    if !domain.is_bounded() {
        return Err(Error::Config(format!(
            "cannot grid the unbounded domain [{}, {}]; truncate it to a bounded interval first",
            domain.lo, domain.hi
        )));
    }
    if domain.hi <= domain.lo {
        return Err(Error::Config(format!(
            "empty domain [{}, {}]",
            domain.lo, domain.hi
        )));
    }
    let pts: Vec<f64> = domain.grid(grid_points).collect();
    let vals: Vec<f64> = pts.iter().map(|&x| spec.eval(x)).collect();
    Ok(pts
        .windows(2)
        .zip(vals.windows(2))
        .map(|(x, v)| (v[1] - v[0]).abs() / (x[1] - x[0]))
        .fold(0.0, f64::max))
}

/// Condition that `f` is not identically zero, checked on a dense grid.
pub fn is_nontrivial(spec: &DriftSpec, domain: Interval, grid_points: usize) -> Result<bool> {
    if !domain.is_bounded() || grid_points < 2 {
        return Err(Error::Config(
            "nontriviality check needs a bounded domain and at least 2 grid points".into(),
        ));
    }
    Ok(domain.grid(grid_points).any(|x| spec.eval(x).abs() > 0.0))
}

/// Sup-norm gap between a central-difference derivative of the attached
/// primitive and `f`, on the midpoints of a uniform grid over `domain`.
/// Returns `None` when no primitive is attached.
pub fn antiderivative_mismatch(spec: &DriftSpec, domain: Interval, cells: usize) -> Result<Option<f64>> {
    if !domain.is_bounded() || cells == 0 {
        return Err(Error::Config(
            "antiderivative check needs a bounded domain and at least one cell".into(),
        ));
    }
    if !spec.has_antiderivative() {
        return Ok(None);
    }
    let width = (domain.hi - domain.lo) / cells as f64;
    let mut worst = 0.0f64;
    for k in 0..cells {
        let x = domain.lo + (k as f64 + 0.5) * width;
        let h = (1e-6 * x.abs().max(1.0)).min(0.5 * (x - domain.lo)).min(0.5 * (domain.hi - x));
        let lhs = spec.antiderivative(domain.lo, x + h).unwrap();
        let rhs = spec.antiderivative(domain.lo, x - h).unwrap();
        let derivative = (lhs - rhs) / (2.0 * h);
        worst = worst.max((derivative - spec.eval(x)).abs());
    }
    Ok(Some(worst))
}
