//! Sectioned key-value configuration files.
//!
//! ```text
//! # comment
//! [model]
//! drift = "sin2pi"
//! theta = 1.0
//!
//! [barriers]
//! lower = 0
//! upper = 3
//! ```
//!
//! Values are JSON literals. Every key must be consumed by the command
//! reading the file; leftovers are reported as unknown keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::invariant::SignConvention;
use crate::montecarlo::ExperimentConfig;
use crate::reflection::{BarrierConfig, BarrierKind, Scheme, SimConfig};
use crate::drift::builtin_drift;

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    line: usize,
    used: bool,
}

/// Parsed configuration file with consumption tracking.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, Entry>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unterminated section header `{s}`"),
                })?;
                let name = name.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(Error::Parse {
                        line,
                        message: format!("invalid section name `{name}`"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = s.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, found `{s}`"),
            })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid key `{key}`"),
                });
            }
            let sec = section.as_deref().ok_or_else(|| Error::Parse {
                line,
                message: format!("key `{key}` appears before any [section] header"),
            })?;
            let value: Value = serde_json::from_str(value.trim()).map_err(|e| Error::Parse {
                line,
                message: format!("value of `{sec}.{key}` is not a JSON literal: {e}"),
            })?;
            let full = format!("{sec}.{key}");
            if entries.contains_key(&full) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key `{full}`"),
                });
            }
            entries.insert(full, Entry { value, line, used: false });
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ConfigFile::parse(&text)
    }

    fn take(&mut self, key: &str) -> Option<(Value, usize)> {
        let e = self.entries.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn type_error(key: &str, line: usize, want: &str, got: &Value) -> Error {
        Error::Parse {
            line,
            message: format!("field `{key}` expected {want}, found {got}"),
        }
    }

    fn missing(key: &str) -> Error {
        Error::Config(format!("missing required field `{key}`"))
    }

    pub fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None | Some((Value::Null, _)) => Ok(None),
            Some((v, line)) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Self::type_error(key, line, "a number", &v)),
        }
    }

    pub fn f64(&mut self, key: &str) -> Result<f64> {
        self.opt_f64(key)?.ok_or_else(|| Self::missing(key))
    }

    pub fn opt_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None | Some((Value::Null, _)) => Ok(None),
            Some((v, line)) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| Self::type_error(key, line, "a nonnegative integer", &v)),
        }
    }

    pub fn opt_i64(&mut self, key: &str) -> Result<Option<i64>> {
        match self.take(key) {
            None | Some((Value::Null, _)) => Ok(None),
            Some((v, line)) => v
                .as_i64()
                .map(Some)
                .ok_or_else(|| Self::type_error(key, line, "an integer", &v)),
        }
    }

    pub fn opt_str(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None | Some((Value::Null, _)) => Ok(None),
            Some((Value::String(s), _)) => Ok(Some(s)),
            Some((v, line)) => Err(Self::type_error(key, line, "a string", &v)),
        }
    }

    pub fn str(&mut self, key: &str) -> Result<String> {
        self.opt_str(key)?.ok_or_else(|| Self::missing(key))
    }

    pub fn opt_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None | Some((Value::Null, _)) => Ok(None),
            Some((Value::Bool(b), _)) => Ok(Some(b)),
            Some((v, line)) => Err(Self::type_error(key, line, "true or false", &v)),
        }
    }

    /// A number or a list of numbers.
    pub fn opt_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None | Some((Value::Null, _)) => Ok(None),
            Some((Value::Array(items), line)) => items
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| Self::type_error(key, line, "a list of numbers", v)))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some((v, line)) => v
                .as_f64()
                .map(|x| Some(vec![x]))
                .ok_or_else(|| Self::type_error(key, line, "a number or list of numbers", &v)),
        }
    }

    pub fn opt_u64_list(&mut self, key: &str) -> Result<Option<Vec<u64>>> {
        match self.take(key) {
            None | Some((Value::Null, _)) => Ok(None),
            Some((Value::Array(items), line)) => items
                .iter()
                .map(|v| v.as_u64().ok_or_else(|| Self::type_error(key, line, "a list of nonnegative integers", v)))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some((v, line)) => v
                .as_u64()
                .map(|x| Some(vec![x]))
                .ok_or_else(|| Self::type_error(key, line, "an integer or list of integers", &v)),
        }
    }

    pub fn opt_str_list(&mut self, key: &str) -> Result<Option<Vec<String>>> {
        match self.take(key) {
            None | Some((Value::Null, _)) => Ok(None),
            Some((Value::Array(items), line)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| Self::type_error(key, line, "a list of strings", v))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some((Value::String(s), _)) => Ok(Some(vec![s])),
            Some((v, line)) => Err(Self::type_error(key, line, "a string or list of strings", &v)),
        }
    }

    /// Errors on the first key no reader consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(Error::Parse {
                line: e.line,
                message: format!("unknown key `{key}`"),
            }),
            None => Ok(()),
        }
    }
}

/// Fully resolved configuration as canonical `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Resolved(pub BTreeMap<String, Value>);

impl Resolved {
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn canonical_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

fn read_barriers(cfg: &mut ConfigFile) -> Result<BarrierConfig> {
    let lower = cfg.opt_f64("barriers.lower")?.unwrap_or(0.0);
    let b = BarrierConfig {
        lower,
        upper: cfg.opt_f64("barriers.upper")?,
    };
    b.validate()?;
    Ok(b)
}

fn put_barriers(r: &mut Resolved, b: &BarrierConfig) {
    r.set("barriers.lower", b.lower);
    r.set("barriers.upper", b.upper.map(Value::from).unwrap_or(Value::Null));
}

fn read_scheme(cfg: &mut ConfigFile, key: &str) -> Result<Scheme> {
    cfg.opt_str(key)?.map(|s| s.parse()).transpose().map(Option::unwrap_or_default)
}

/// Reads a path-simulation config (`[model]`, `[barriers]`, `[simulation]`).
pub fn sim_config(mut cfg: ConfigFile, seed_override: Option<u64>) -> Result<(SimConfig, Resolved)> {
    let drift_name = cfg.str("model.drift")?;
    let theta = cfg.f64("model.theta")?;
    let sigma = cfg.f64("model.sigma")?;
    let barriers = read_barriers(&mut cfg)?;
    let x0 = cfg.f64("simulation.x0")?;
    let dt = cfg.f64("simulation.dt")?;
    let n_steps = cfg.opt_u64("simulation.n_steps")?.ok_or_else(|| ConfigFile::missing("simulation.n_steps"))?;
    let seed = cfg.opt_u64("simulation.seed")?.unwrap_or(0);
    let scheme = read_scheme(&mut cfg, "simulation.scheme")?;
    cfg.finish()?;
    let drift = builtin_drift(&drift_name)?;
    let config = SimConfig {
        drift,
        theta,
        sigma,
        barriers,
        x0,
        dt,
        n_steps: n_steps as usize,
        seed: seed_override.unwrap_or(seed),
        scheme,
    };
    config.validate()?;
    let mut r = Resolved::default();
    r.set("model.drift", drift_name);
    r.set("model.theta", theta);
    r.set("model.sigma", sigma);
    put_barriers(&mut r, &barriers);
    r.set("simulation.x0", x0);
    r.set("simulation.dt", dt);
    r.set("simulation.n_steps", n_steps);
    r.set("simulation.seed", config.seed);
    r.set("simulation.scheme", scheme.name());
    Ok((config, r))
}

fn read_sign(cfg: &mut ConfigFile, key: &str) -> Result<Option<SignConvention>> {
    cfg.opt_i64(key)?.map(SignConvention::from_factor).transpose()
}

/// Reads a Monte-Carlo config (`[model]`, `[barriers]`, `[experiment]`).
/// Unset experiment fields take the reference study layout.
pub fn experiment_config(mut cfg: ConfigFile, seed_override: Option<u64>) -> Result<(ExperimentConfig, Resolved)> {
    let drift_name = cfg.str("model.drift")?;
    let mut e = ExperimentConfig::table_defaults(&drift_name);
    if let Some(s) = cfg.opt_f64("model.sigma")? {
        e.sigma = s;
    }
    if cfg.entries.keys().any(|k| k.starts_with("barriers.")) {
        e.barriers = read_barriers(&mut cfg)?;
        e.x0 = 0.5 * (e.barriers.lower + e.barriers.upper.unwrap_or(e.barriers.lower + 3.0));
    }
    if let Some(t) = cfg.opt_f64_list("experiment.theta0")? {
        e.theta0 = t;
    }
    if let Some(n) = cfg.opt_u64_list("experiment.n_list")? {
        e.n_list = n.into_iter().map(|v| v as usize).collect();
    }
    if let Some(dt) = cfg.opt_f64("experiment.dt")? {
        e.dt = dt;
    }
    if let Some(n) = cfg.opt_u64("experiment.replicates")? {
        e.replicates = n as usize;
    }
    if let Some(s) = cfg.opt_u64("experiment.base_seed")? {
        e.base_seed = s;
    }
    if let Some(c) = cfg.opt_f64("experiment.ci_level")? {
        e.ci_level = c;
    }
    if let Some(x) = cfg.opt_f64("experiment.x0")? {
        e.x0 = x;
    }
    if let Some(kinds) = cfg.opt_str_list("experiment.barrier_kinds")? {
        e.barrier_kinds = kinds.iter().map(|k| k.parse::<BarrierKind>()).collect::<Result<_>>()?;
    }
    e.scheme = read_scheme(&mut cfg, "experiment.scheme")?;
    if let Some(s) = read_sign(&mut cfg, "experiment.sign_convention")? {
        e.sign_convention = s;
    }
    cfg.finish()?;
    if let Some(s) = seed_override {
        e.base_seed = s;
    }
    e.validate()?;

    let mut r = Resolved::default();
    r.set("model.drift", e.drift_name.clone());
    r.set("model.sigma", e.sigma);
    put_barriers(&mut r, &e.barriers);
    r.set("experiment.theta0", e.theta0.clone());
    r.set("experiment.n_list", e.n_list.iter().map(|&n| n as u64).collect::<Vec<_>>());
    r.set("experiment.dt", e.dt);
    r.set("experiment.replicates", e.replicates as u64);
    r.set("experiment.base_seed", e.base_seed);
    r.set("experiment.ci_level", e.ci_level);
    r.set("experiment.x0", e.x0);
    r.set(
        "experiment.barrier_kinds",
        e.barrier_kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
    );
    r.set("experiment.scheme", e.scheme.name());
    r.set("experiment.sign_convention", e.sign_convention.factor() as i64);
    Ok((e, r))
}

/// Which sign conventions the density command emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignRequest {
    One(SignConvention),
    Both,
}

#[derive(Debug, Clone)]
pub struct DensityConfig {
    pub drift_name: String,
    pub theta: f64,
    pub sigma: f64,
    pub barriers: BarrierConfig,
    pub signs: SignRequest,
    pub oracle: bool,
    pub oracle_horizon: f64,
    pub oracle_dt: f64,
    pub seed: u64,
    pub x0: f64,
}

/// Reads a density config (`[model]`, `[barriers]`, optional `[density]`).
pub fn density_config(mut cfg: ConfigFile, seed_override: Option<u64>) -> Result<(DensityConfig, Resolved)> {
    let drift_name = cfg.str("model.drift")?;
    let theta = cfg.f64("model.theta")?;
    let sigma = cfg.f64("model.sigma")?;
    let barriers = read_barriers(&mut cfg)?;
    let signs = match cfg.take("density.sign_convention") {
        None | Some((Value::Null, _)) => SignRequest::One(crate::invariant::DEFAULT_SIGN_CONVENTION),
        Some((Value::String(s), _)) if s == "both" => SignRequest::Both,
        Some((v, line)) => match v.as_i64() {
            Some(k) => SignRequest::One(SignConvention::from_factor(k)?),
            None => return Err(ConfigFile::type_error("density.sign_convention", line, "1, -1 or \"both\"", &v)),
        },
    };
    let oracle = cfg.opt_bool("density.oracle")?.unwrap_or(false);
    let oracle_horizon = cfg.opt_f64("density.oracle_horizon")?.unwrap_or(5000.0);
    let oracle_dt = cfg.opt_f64("density.oracle_dt")?.unwrap_or(1e-3);
    let seed = seed_override.unwrap_or(cfg.opt_u64("density.seed")?.unwrap_or(0));
    let x0 = cfg.opt_f64("density.x0")?.unwrap_or(barriers.lower);
    cfg.finish()?;
    builtin_drift(&drift_name)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let mut r = Resolved::default();
    r.set("model.drift", drift_name.clone());
    r.set("model.theta", theta);
    r.set("model.sigma", sigma);
    put_barriers(&mut r, &barriers);
    r.set(
        "density.sign_convention",
        match signs {
            SignRequest::Both => Value::from("both"),
            SignRequest::One(s) => Value::from(s.factor() as i64),
        },
    );
    r.set("density.oracle", oracle);
    r.set("density.oracle_horizon", oracle_horizon);
    r.set("density.oracle_dt", oracle_dt);
    r.set("density.seed", seed);
    r.set("density.x0", x0);
    Ok((
        DensityConfig {
            drift_name,
            theta,
            sigma,
            barriers,
            signs,
            oracle,
            oracle_horizon,
            oracle_dt,
            seed,
            x0,
        },
        r,
    ))
}
