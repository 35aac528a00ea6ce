//! Orchestration behind the `maflow` binary: runs, verification of stored
//! runs, oracle outputs and paired comparisons.
//!
//! A run directory holds the resolved `config.toml` and one `level_<j>`
//! directory per approximation level, each with `series.csv` and
//! `snap_t<time>.mafl` snapshots at `t = 0`, the configured snapshot times
//! and the horizon.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use maflow::config::RunConfig;
use maflow::elliptic::{solve_ma_with, SolveOptions};
use maflow::flow::{run_from, FlowConfig, FlowState, Stepper, TwistSpec};
use maflow::initial::{approximation_sequence_with, default_point, log_potential};
use maflow::io::{
    read_series_csv, read_snapshot, snapshot_name, verdict_summary, write_series_csv, write_snapshot,
    write_verdicts_csv,
};
use maflow::verify::{check_by_name, VerdictReport, TRAJECTORY_CHECKS};
use maflow::{Error, PotentialField, TorusGrid, Trajectory};

pub const OUTPUT_ROOT_ENV: &str = "MAFLOW_OUTPUT_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// A failed command: message and process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::InvalidConfig(_)
            | Error::InvalidSpec(_)
            | Error::InvalidGrid(_)
            | Error::GridMismatch(_)
            | Error::ConfigMismatch(_)
            | Error::BadSnapshot { .. }
            | Error::MonotonicityFailure { .. }
            | Error::Io(_)
            | Error::Csv(_) => EXIT_CONFIG,
            _ => EXIT_SOLVER,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn config_error(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_CONFIG, message: msg.into() }
}

/// Resolve a relative output path against `root` (the output root).
pub fn resolve_output(root: Option<&Path>, p: &Path) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

pub fn level_dir(dir: &Path, j: usize) -> PathBuf {
    dir.join(format!("level_{j}"))
}

/// Level directories of a run, in level order.
pub fn level_dirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for j in 1.. {
        let d = level_dir(dir, j);
        if !d.is_dir() {
            break;
        }
        out.push(d);
    }
    if out.is_empty() {
        return Err(config_error(format!("{} has no level_1 directory", dir.display())));
    }
    Ok(out)
}

fn write_level(dir: &Path, traj: &Trajectory, snap_times: &[f64]) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    write_series_csv(dir.join("series.csv"), traj.series())?;
    let first = traj.initial().t;
    let last = traj.last().t;
    for s in traj.states() {
        let wanted = s.t == first || s.t == last || snap_times.iter().any(|&t| (t - s.t).abs() <= 1e-12 * t.max(1.0));
        if wanted {
            write_snapshot(dir.join(snapshot_name(s.t)), &s.phi, s.t, s.step_count)?;
        }
    }
    Ok(())
}

fn failure_report(dir: &Path, level: usize, e: &Error) -> CliError {
    let t = match e {
        Error::FlowFailed { t, .. } => Some(*t),
        _ => None,
    };
    let mut msg = format!("level {level}: {e}");
    if let Some(t) = t {
        let _ = write!(msg, "\nfailure time: {t:.9e}");
    }
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(dir.join("failure.txt"), format!("{msg}\n"));
    CliError { code: EXIT_SOLVER, message: msg }
}

/// Run every level of the configured approximation sequence into `dir`.
pub fn cmd_run(cfg: &RunConfig, dir: &Path) -> CliResult<Vec<Trajectory>> {
    let grid = cfg.grid()?;
    let flow = cfg.flow_config()?;
    let seq = approximation_sequence_with(&cfg.initial.potential, &grid, cfg.initial.levels, &cfg.initial.approx)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    let mut out = Vec::with_capacity(seq.levels().len());
    for lvl in seq.levels() {
        log::info!("level {} (delta = {:.4e})", lvl.j, lvl.delta);
        let traj = maflow::run(&lvl.phi, &flow).map_err(|e| failure_report(dir, lvl.j, &e))?;
        write_level(&level_dir(dir, lvl.j), &traj, &cfg.output.snapshot_times)?;
        out.push(traj);
    }
    Ok(out)
}

/// Continue a stored run from its snapshot at `from` to `horizon` (the
/// configured horizon if `None`), writing a full run directory to `out`.
pub fn cmd_restart(dir: &Path, from: f64, horizon: Option<f64>, out: &Path) -> CliResult<Vec<Trajectory>> {
    let mut cfg = RunConfig::load(dir.join("config.toml"))?;
    if let Some(h) = horizon {
        cfg.flow.horizon = h;
    }
    let flow = cfg.flow_config()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    let mut runs = Vec::new();
    for (k, ld) in level_dirs(dir)?.iter().enumerate() {
        let snap = read_snapshot(ld.join(snapshot_name(from)))?;
        let traj = run_from(snap.t, &snap.field, snap.step_count, &flow).map_err(|e| failure_report(out, k + 1, &e))?;
        write_level(&level_dir(out, k + 1), &traj, &cfg.output.snapshot_times)?;
        runs.push(traj);
    }
    Ok(runs)
}

fn snapshot_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mafl"))
        .collect();
    v.sort();
    Ok(v)
}

/// Reload one level: snapshots become states (with the right-hand side
/// recomputed) and the series is read from disk.
pub fn load_level(dir: &Path, flow: &FlowConfig) -> CliResult<Trajectory> {
    let stepper = Stepper::new(flow)?;
    let mut states: Vec<FlowState> = Vec::new();
    for p in snapshot_paths(dir)? {
        let s = read_snapshot(&p)?;
        states.push(stepper.state(s.t, s.field, s.step_count, 0.0)?);
    }
    states.sort_by(|a, b| a.t.total_cmp(&b.t));
    let series = read_series_csv(dir.join("series.csv"))?;
    Ok(Trajectory::assemble(flow.clone(), states, series)?)
}

pub fn load_run(dir: &Path) -> CliResult<(RunConfig, Vec<Trajectory>)> {
    let cfg = RunConfig::load(dir.join("config.toml"))?;
    let flow = cfg.flow_config()?;
    let runs = level_dirs(dir)?.iter().map(|d| load_level(d, &flow)).collect::<CliResult<Vec<_>>>()?;
    Ok((cfg, runs))
}

/// Outcome of [`cmd_verify`].
#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub reports: Vec<VerdictReport>,
    pub failed: bool,
}

/// Run the named checks (the config's list, or every check, if empty) on
/// every level and write `verdicts.csv`.
pub fn cmd_verify(dir: &Path, checks: &[String]) -> CliResult<VerifyOutcome> {
    let (cfg, runs) = load_run(dir)?;
    let names: Vec<String> = if !checks.is_empty() {
        checks.to_vec()
    } else if !cfg.verify.checks.is_empty() {
        cfg.verify.checks.clone()
    } else {
        TRAJECTORY_CHECKS.iter().map(|s| s.to_string()).collect()
    };
    let mut reports = Vec::new();
    for (k, traj) in runs.iter().enumerate() {
        for name in &names {
            let rep = check_by_name(name, traj, &cfg.verify.params_for(name))
                .ok_or_else(|| config_error(format!("unknown check {name:?}")))??;
            let note = if rep.note.is_empty() { format!("level {}", k + 1) } else { format!("level {}; {}", k + 1, rep.note) };
            reports.push(rep.with_note(note));
        }
    }
    write_verdicts_csv(dir.join("verdicts.csv"), &reports)?;
    let failed = reports.iter().any(|r| r.is_failure());
    Ok(VerifyOutcome { reports, failed })
}

pub fn summary(reports: &[VerdictReport]) -> String {
    verdict_summary(reports)
}

/// One row of a paired comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub level: usize,
    pub t: f64,
    /// `min (phi_b - phi_a)`.
    pub min_diff: f64,
    pub max_diff: f64,
    pub sup_abs: f64,
}

/// Differences `phi_b - phi_a` at every snapshot time the two runs share,
/// level by level. Written to `out` as CSV when given.
pub fn cmd_compare(a: &Path, b: &Path, out: Option<&Path>) -> CliResult<Vec<CompareRow>> {
    let (da, db) = (level_dirs(a)?, level_dirs(b)?);
    let mut rows = Vec::new();
    for (k, (la, lb)) in da.iter().zip(&db).enumerate() {
        for pa in snapshot_paths(la)? {
            let pb = lb.join(pa.file_name().expect("snapshot file name"));
            if !pb.exists() {
                continue;
            }
            let (sa, sb) = (read_snapshot(&pa)?, read_snapshot(&pb)?);
            let d = sb.field.zip_map(&sa.field, |x, y| x - y)?;
            rows.push(CompareRow {
                level: k + 1,
                t: sa.t,
                min_diff: d.min(),
                max_diff: d.max(),
                sup_abs: d.max().abs().max(d.min().abs()),
            });
        }
    }
    if rows.is_empty() {
        return Err(config_error("the runs share no snapshot"));
    }
    if let Some(p) = out {
        let mut w = csv::Writer::from_path(p).map_err(Error::from)?;
        w.write_record(["level", "t", "min_diff", "max_diff", "sup_abs"]).map_err(Error::from)?;
        for r in &rows {
            w.write_record([
                r.level.to_string(),
                format!("{:e}", r.t),
                format!("{:e}", r.min_diff),
                format!("{:e}", r.max_diff),
                format!("{:e}", r.sup_abs),
            ])
            .map_err(Error::from)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

/// Closed-form and fixed-point references.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// `amp e^{-4 pi^2 kappa |k|^2 t / L^2} cos(2 pi k.x / L)` with
    /// `kappa = 1/4`, the small-data limit of the flow, sampled at `times`.
    Heat { grid: TorusGrid, amp: f64, k: Vec<i32>, times: Vec<f64> },
    /// Solution of `(theta + dd^c u)^n = e^{alpha u + g} omega^n` for `g = 0`.
    Elliptic { grid: TorusGrid, alpha: f64 },
    /// `gamma G(z - z0)` at the default singular point.
    Lelong { grid: TorusGrid, gamma: f64 },
}

/// Diffusivity of the heat limit: `d phi/dt ~ tr H(phi) = Laplacian(phi) / 4`.
pub const HEAT_KAPPA: f64 = 0.25;

pub fn heat_amplitude(amp: f64, k: &[i32], period: f64, t: f64) -> f64 {
    let k2: f64 = k.iter().map(|&k| (k * k) as f64).sum();
    amp * (-4.0 * std::f64::consts::PI.powi(2) * HEAT_KAPPA * k2 * t / (period * period)).exp()
}

/// Write the oracle output into `out` and return the files written.
pub fn cmd_oracle(oracle: &Oracle, out: &Path) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    match oracle {
        Oracle::Heat { grid, amp, k, times } => {
            if k.len() != grid.dims() {
                return Err(config_error(format!("mode needs {} components", grid.dims())));
            }
            let p = out.join("heat.csv");
            let mut s = String::from("t,amplitude\n");
            for &t in times {
                let _ = writeln!(s, "{t:e},{:e}", heat_amplitude(*amp, k, grid.period(), t));
            }
            fs::write(&p, s)?;
            files.push(p);
            let l = grid.period();
            let f = PotentialField::from_fn(*grid, |x| {
                let dot: f64 = k.iter().zip(x).map(|(&k, &x)| k as f64 * x).sum();
                amp * (2.0 * std::f64::consts::PI * dot / l).cos()
            });
            let p = out.join(snapshot_name(0.0));
            write_snapshot(&p, &f, 0.0, 0)?;
            files.push(p);
        }
        Oracle::Elliptic { grid, alpha } => {
            let zero = PotentialField::zeros(*grid);
            let sol = solve_ma_with(*alpha, &zero, &zero, &TwistSpec::zero(*grid), 0.0, &SolveOptions::default())?;
            let p = out.join("elliptic_u.mafl");
            write_snapshot(&p, &sol.u, 0.0, 0)?;
            files.push(p);
            let p = out.join("elliptic.txt");
            fs::write(&p, format!("residual {:e}\nconstant {:e}\nsup_abs {:e}\n", sol.residual, sol.constant, sol.u.max().abs().max(sol.u.min().abs())))?;
            files.push(p);
        }
        Oracle::Lelong { grid, gamma } => {
            let f = log_potential(grid, &default_point(grid), *gamma);
            let p = out.join("lelong.mafl");
            write_snapshot(&p, &f, 0.0, 0)?;
            files.push(p);
        }
    }
    Ok(files)
}
