//! CSV formats for paths, estimates and Monte-Carlo summaries, and the run
//! manifest written next to every output.
//!
//! Floating-point values are written with 17 significant digits so that
//! reading a file back reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::EstimateResult;
use crate::montecarlo::McSummary;
use crate::reflection::{BarrierConfig, ReflectedPath, Scheme, SimConfig};

/// Formats `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "NA".to_string())
}

fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from `{}`", s.trim()),
    })
}

pub const PATH_COLUMNS: &str = "t,x,dL_cum,dR_cum";

/// Writes a path as CSV: one comment line carrying the simulation config as
/// `key=value` pairs, a column header, then one row per grid point.
pub fn path_to_csv(config: &SimConfig, path: &ReflectedPath) -> String {
    let mut out = String::with_capacity(80 * (path.states.len() + 2));
    let upper = config.barriers.upper.map(fmt_f64).unwrap_or_else(|| "none".into());
    let _ = writeln!(
        out,
        "# drift={} theta={} sigma={} lower={} upper={} x0={} dt={} n_steps={} seed={} scheme={}",
        config.drift.name(),
        fmt_f64(config.theta),
        fmt_f64(config.sigma),
        fmt_f64(config.barriers.lower),
        upper,
        fmt_f64(config.x0),
        fmt_f64(config.dt),
        config.n_steps,
        config.seed,
        path.scheme.name(),
    );
    out.push_str(PATH_COLUMNS);
    out.push('\n');
    let l_cum = path.cumulative_l();
    let r_cum = path.cumulative_r();
    for i in 0..path.states.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(path.times[i]),
            fmt_f64(path.states[i]),
            fmt_f64(l_cum[i]),
            fmt_f64(r_cum[i])
        );
    }
    out
}

/// Metadata recovered from a path file's comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathHeader {
    pub fields: BTreeMap<String, String>,
}

impl PathHeader {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| parse_f64(v, 1, key))
            .transpose()
    }

    pub fn sigma(&self) -> Result<Option<f64>> {
        self.f64("sigma")
    }

    pub fn seed(&self) -> Option<u64> {
        self.get("seed").and_then(|s| s.parse().ok())
    }

    pub fn barriers(&self) -> Result<BarrierConfig> {
        let lower = self.f64("lower")?.ok_or_else(|| Error::Parse {
            line: 1,
            message: "path header is missing `lower`".into(),
        })?;
        let upper = match self.get("upper") {
            None | Some("none") => None,
            Some(v) => Some(parse_f64(v, 1, "upper")?),
        };
        let b = BarrierConfig { lower, upper };
        b.validate()?;
        Ok(b)
    }
}

/// Parses a path CSV written by [`path_to_csv`].
pub fn path_from_csv(text: &str) -> Result<(PathHeader, ReflectedPath)> {
    let mut header = PathHeader::default();
    let mut seen_columns = false;
    let (mut t, mut x, mut l, mut r) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('#') {
            for pair in rest.split_whitespace() {
                if let Some((k, v)) = pair.split_once('=') {
                    header.fields.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        if !seen_columns {
            if s.replace(' ', "") != PATH_COLUMNS {
                return Err(Error::Parse {
                    line,
                    message: format!("expected column header `{PATH_COLUMNS}`, found `{s}`"),
                });
            }
            seen_columns = true;
            continue;
        }
        let cols: Vec<&str> = s.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        t.push(parse_f64(cols[0], line, "t")?);
        x.push(parse_f64(cols[1], line, "x")?);
        l.push(parse_f64(cols[2], line, "dL_cum")?);
        r.push(parse_f64(cols[3], line, "dR_cum")?);
    }
    if !seen_columns {
        return Err(Error::Parse {
            line: 1,
            message: "missing column header".into(),
        });
    }
    let mut path = ReflectedPath::from_cumulative(t, x, &l, &r)?;
    if let Some(s) = header.get("scheme") {
        path.scheme = s.parse::<Scheme>()?;
    }
    Ok((header, path))
}

pub const ESTIMATE_COLUMNS: &str = "method,theta_hat,std_error,ci_lo,ci_hi,T,dt,seed";

/// One CSV row in [`ESTIMATE_COLUMNS`] layout.
pub fn estimate_row(est: &EstimateResult, dt: f64, seed: Option<u64>) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        est.method,
        fmt_f64(est.theta_hat),
        fmt_f64(est.std_error),
        fmt_f64(est.ci.0),
        fmt_f64(est.ci.1),
        fmt_f64(est.horizon),
        fmt_f64(dt),
        seed.map(|s| s.to_string()).unwrap_or_else(|| "NA".into())
    )
}

pub const SUMMARY_COLUMNS: &str = "drift,theta0,barrier_kind,n,dt,T,N,bias,std_dev,mse,ci_coverage,ks_stat,dropped";

pub fn summary_to_csv(summaries: &[McSummary], comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    out.push_str(SUMMARY_COLUMNS);
    out.push('\n');
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.drift,
            fmt_f64(s.theta0),
            s.barrier_kind,
            s.n,
            fmt_f64(s.dt),
            fmt_f64(s.horizon),
            s.replicates,
            fmt_f64(s.bias),
            fmt_f64(s.std_dev),
            fmt_f64(s.mse),
            fmt_f64(s.ci_coverage),
            fmt_opt(s.ks_statistic),
            s.dropped
        );
    }
    out
}

/// Audit record written next to every command's outputs.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub timestamp: String,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(config_digest: String, outputs: Vec<PathBuf>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs,
            notes: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::builtin_drift;
    use crate::reflection::simulate;
    use proptest::prelude::*;

    fn config(upper: Option<f64>) -> SimConfig {
        SimConfig {
            drift: builtin_drift("sin2pi").unwrap(),
            theta: 1.0,
            sigma: 2.0,
            barriers: BarrierConfig { lower: 0.0, upper },
            x0: 1.5,
            dt: 0.1,
            n_steps: 300,
            seed: 17,
            scheme: Scheme::Projection,
        }
    }

    #[test]
    fn path_round_trip_is_bit_exact() {
        for upper in [Some(3.0), None] {
            let c = config(upper);
            let p = simulate(&c).unwrap();
            let (h, q) = path_from_csv(&path_to_csv(&c, &p)).unwrap();
            assert_eq!(p.times, q.times);
            assert_eq!(p.states, q.states);
            assert_eq!(p.dl, q.dl);
            assert_eq!(p.dr, q.dr);
            assert_eq!(h.barriers().unwrap(), c.barriers);
            assert_eq!(h.sigma().unwrap(), Some(2.0));
            assert_eq!(h.seed(), Some(17));
            assert_eq!(h.get("drift"), Some("sin2pi"));
        }
    }

    #[test]
    fn malformed_rows_report_line() {
        let c = config(Some(3.0));
        let p = simulate(&c).unwrap();
        let text = path_to_csv(&c, &p).replacen("0.0000000000000000e0,1.5", "zero,1.5", 1);
        let err = path_from_csv(&text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn summary_layout() {
        let csv = summary_to_csv(&[], Some("dt=0.1"));
        assert_eq!(csv, format!("# dt=0.1\n{SUMMARY_COLUMNS}\n"));
    }

    proptest! {
        #[test]
        fn seventeen_digits_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
