//! Command-line front end: `simulate`, `estimate`, `montecarlo`, `density`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{self, ConfigFile, SignRequest};
use crate::drift::builtin_drift;
use crate::error::{Error, Result};
use crate::estimators::{estimate, quadratic_variation_sigma, Method};
use crate::invariant::{invariant_density, select_sign_convention, HistogramOracle, InvariantDensity};
use crate::io::{self, fmt_f64, RunManifest};
use crate::montecarlo::run_experiment;
use crate::reflection::simulate;

#[derive(Debug, Parser)]
#[command(name = "refsde", version, about = "Reflected SDE simulation and drift estimation")]
pub struct Cli {
    /// Override the seed (or base seed) from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for Monte-Carlo batches.
    #[arg(long, global = true, env = "REFSDE_THREADS")]
    pub threads: Option<usize>,

    /// Output file (simulate, density) or directory (montecarlo).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one reflected path and write it as CSV.
    Simulate {
        config: PathBuf,
    },
    /// Estimate the drift parameter from a path CSV.
    Estimate {
        path_csv: PathBuf,
        /// Known diffusion coefficient; defaults to the path header.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value = "MLE")]
        method: String,
        /// Confidence level of the reported interval.
        #[arg(long, default_value_t = 0.95)]
        ci: f64,
    },
    /// Run a replicated simulation study and write a summary table.
    Montecarlo {
        config: PathBuf,
        /// Also write one CSV of per-replicate estimates per cell.
        #[arg(long)]
        keep_replicates: bool,
    },
    /// Tabulate the stationary density on a uniform grid.
    Density {
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        grid: usize,
    },
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Simulates the configured path into `out` (plus `<out>.manifest.json`).
pub fn cmd_simulate(config_file: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let (config, resolved) = config::sim_config(ConfigFile::load(config_file)?, seed)?;
    let path = simulate(&config)?;
    fs::write(out, io::path_to_csv(&config, &path))?;
    let mut manifest = RunManifest::new(resolved.digest(), vec![out.to_path_buf()]);
    if path.overshoots > 0 {
        let note = format!(
            "{} steps overshot past the opposite barrier; consider a smaller dt",
            path.overshoots
        );
        eprintln!("warning: {note}");
        manifest.notes.push(note);
    }
    if let Some(note) = config.drift.note() {
        manifest.notes.push(format!("{}: {note}", config.drift.name()));
    }
    manifest.write(&manifest_path(out))
}

/// Estimates from a path CSV and returns the one-line result row.
///
/// `sigma` falls back to the path header, then to the quadratic-variation
/// plug-in (with a warning on stderr).
pub fn cmd_estimate(path_csv: &Path, sigma: Option<f64>, method: Method, ci: f64) -> Result<String> {
    let text = fs::read_to_string(path_csv)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path_csv.display())))?;
    let (header, path) = io::path_from_csv(&text)?;
    let barriers = header.barriers()?;
    path.check_invariants(&barriers)?;
    let drift_name = header.get("drift").ok_or_else(|| Error::Parse {
        line: 1,
        message: "path header is missing `drift`".into(),
    })?;
    let drift = builtin_drift(drift_name)?;
    let sigma = match sigma.or(header.sigma()?) {
        Some(s) => s,
        None => {
            let s = quadratic_variation_sigma(&path);
            eprintln!("warning: sigma not given; using quadratic-variation plug-in {s:.6}");
            s
        }
    };
    let est = estimate(&path, &drift, sigma, method, ci)?;
    let dt = match header.f64("dt")? {
        Some(dt) => dt,
        None => path.horizon() / path.n_steps() as f64,
    };
    Ok(io::estimate_row(&est, dt, header.seed()))
}

/// Runs the experiment and writes `summary.csv` and `manifest.json` into
/// `out_dir`, plus `replicates/*.csv` when requested.
pub fn cmd_montecarlo(config_file: &Path, out_dir: &Path, seed: Option<u64>, keep_replicates: bool) -> Result<()> {
    let (experiment, resolved) = config::experiment_config(ConfigFile::load(config_file)?, seed)?;
    let runs = run_experiment(&experiment)?;
    fs::create_dir_all(out_dir)?;
    let summaries: Vec<_> = runs.iter().map(|r| r.summary.clone()).collect();
    let comment = format!(
        "config_digest={} dt={} scheme={} sign_convention={}",
        resolved.digest(),
        fmt_f64(experiment.dt),
        experiment.scheme.name(),
        experiment.sign_convention
    );
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, io::summary_to_csv(&summaries, Some(&comment)))?;
    let mut outputs = vec![summary_path];

    if keep_replicates {
        let dir = out_dir.join("replicates");
        fs::create_dir_all(&dir)?;
        for run in &runs {
            let s = &run.summary;
            let file = dir.join(format!("{}_theta{}_{}_n{}.csv", s.drift, s.theta0, s.barrier_kind, s.n));
            let mut text = String::from(io::ESTIMATE_COLUMNS);
            text.push('\n');
            for rec in &run.records {
                if let Some(est) = &rec.estimate {
                    text.push_str(&io::estimate_row(est, s.dt, Some(rec.seed)));
                    text.push('\n');
                }
            }
            fs::write(&file, text)?;
            outputs.push(file);
        }
    }

    let mut manifest = RunManifest::new(resolved.digest(), outputs);
    for s in summaries.iter().filter(|s| s.flagged) {
        let note = format!(
            "theta0={} {} n={}: {} of {} replicates dropped as degenerate",
            s.theta0, s.barrier_kind, s.n, s.dropped, s.replicates
        );
        eprintln!("warning: {note}");
        manifest.notes.push(note);
    }
    manifest.write(&out_dir.join("manifest.json"))
}

fn grid_points(density: &InvariantDensity, grid: usize) -> Vec<f64> {
    let l = density.barriers().lower;
    let end = density.support_end();
    if grid == 1 {
        return vec![0.5 * (l + end)];
    }
    (0..grid)
        .map(|k| if k + 1 == grid { end } else { l + (end - l) * k as f64 / (grid - 1) as f64 })
        .collect()
}

/// Tabulates `(x, pi(x))` as CSV text. With both conventions requested the
/// columns are `density_plus` and `density_minus`; a non-integrable side
/// is written as `NA`.
pub fn cmd_density(config_file: &Path, grid: usize, seed: Option<u64>) -> Result<(String, String)> {
    if grid == 0 {
        return Err(Error::Config("grid must be positive".into()));
    }
    let (cfg, resolved) = config::density_config(ConfigFile::load(config_file)?, seed)?;
    let drift = builtin_drift(&cfg.drift_name)?;
    let mut out = format!("# config_digest={}\n", resolved.digest());

    if cfg.oracle {
        let oracle = HistogramOracle {
            horizon: cfg.oracle_horizon,
            dt: cfg.oracle_dt,
            seed: cfg.seed,
            ..HistogramOracle::default()
        };
        let sel = select_sign_convention(&drift, cfg.theta, cfg.sigma, &cfg.barriers, cfg.x0, &oracle)?;
        out.push_str(&format!(
            "# oracle selected={} ks_plus={} ks_minus={} horizon={} dt={}\n",
            sel.selected,
            fmt_f64(sel.distance_positive),
            fmt_f64(sel.distance_negative),
            fmt_f64(oracle.horizon),
            fmt_f64(oracle.dt)
        ));
    }

    match cfg.signs {
        SignRequest::One(sign) => {
            let d = invariant_density(&drift, cfg.theta, cfg.sigma, &cfg.barriers, sign)?;
            out.push_str(&format!("# sign_convention={sign}\nx,density\n"));
            for x in grid_points(&d, grid) {
                out.push_str(&format!("{},{}\n", fmt_f64(x), fmt_f64(d.density(x))));
            }
        }
        SignRequest::Both => {
            let plus = invariant_density(&drift, cfg.theta, cfg.sigma, &cfg.barriers, crate::invariant::SignConvention::Positive);
            let minus = invariant_density(&drift, cfg.theta, cfg.sigma, &cfg.barriers, crate::invariant::SignConvention::Negative);
            let reference = match (&plus, &minus) {
                (Ok(a), Ok(b)) => {
                    if a.support_end() >= b.support_end() {
                        a
                    } else {
                        b
                    }
                }
                (Ok(a), Err(_)) => a,
                (Err(_), Ok(b)) => b,
                (Err(e), Err(_)) => return Err(Error::Divergence(e.to_string())),
            };
            out.push_str("x,density_plus,density_minus\n");
            let col = |d: &Result<InvariantDensity>, x: f64| match d {
                Ok(d) => fmt_f64(d.density(x)),
                Err(_) => "NA".to_string(),
            };
            for x in grid_points(reference, grid) {
                out.push_str(&format!("{},{},{}\n", fmt_f64(x), col(&plus, x), col(&minus, x)));
            }
        }
    }
    Ok((out, resolved.digest()))
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // Ignore the error when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate { config } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("path.csv"));
            cmd_simulate(&config, &out, cli.seed)
        }
        Command::Estimate { path_csv, sigma, method, ci } => {
            let method: Method = method.parse()?;
            let row = cmd_estimate(&path_csv, sigma, method, ci)?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{row}")?;
            Ok(())
        }
        Command::Montecarlo { config, keep_replicates } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("mc_out"));
            cmd_montecarlo(&config, &out, cli.seed, keep_replicates)
        }
        Command::Density { config, grid } => {
            let (csv, digest) = cmd_density(&config, grid, cli.seed)?;
            match cli.out {
                Some(out) => {
                    fs::write(&out, csv)?;
                    RunManifest::new(digest, vec![out.clone()]).write(&manifest_path(&out))
                }
                None => {
                    std::io::stdout().lock().write_all(csv.as_bytes())?;
                    Ok(())
                }
            }
        }
    }
}
