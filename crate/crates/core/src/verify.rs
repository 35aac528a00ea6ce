//! Quantified checks of the a priori estimates over recorded trajectories.
//!
//! Every check reduces to a worst signed slack (`>= 0` means the inequality
//! holds) and passes when `slack >= -tolerance`. Checks whose hypotheses do
//! not hold for the trajectory are reported as skipped, never failed.
//! Maximum-principle checks use the auxiliary quantity `H` whose sign is
//! preserved by the flow rather than the derived pointwise bounds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{t_max, SignClass, Trajectory, Variant};
use crate::functionals::oscillation;
use crate::geometry::metric_matrix_unchecked;
use crate::grid::{PotentialField, TorusPoint};
use crate::initial::lelong_estimate_window;

pub const TOL_SUP_BOUND: f64 = 1e-6;
pub const TOL_CLEF: f64 = 1e-5;
pub const TOL_NCMAF: f64 = 1e-5;
pub const TOL_COMPARISON: f64 = 1e-6;
pub const TOL_DENSITY: f64 = 1e-5;
pub const TOL_ENERGY: f64 = 1e-4;
pub const TOL_MEAN_SLOPE: f64 = 1e-3;
pub const TOL_MEAN_CONVEX: f64 = 1e-3;
pub const TOL_VOLUME: f64 = 1e-6;
pub const TOL_SEMIGROUP: f64 = 1e-8;
/// Allowed relative spread of `Osc(phi_t)` across approximation levels.
pub const OSC_SPREAD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub name: String,
    /// The inequality being checked.
    pub anchor: String,
    /// Worst signed slack (NaN when skipped).
    pub slack: f64,
    pub tolerance: f64,
    /// Time of the worst slack.
    pub t: f64,
    /// Gridpoint of the worst slack.
    pub index: usize,
    pub gated_on: String,
    pub status: Status,
    /// Advisory checks never count as failures.
    pub advisory: bool,
    pub note: String,
}

impl VerdictReport {
    pub fn new(name: &str, anchor: &str, worst: Worst, tolerance: f64, gated_on: String) -> Self {
        let status = if worst.slack >= -tolerance { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            anchor: anchor.into(),
            slack: worst.slack,
            tolerance,
            t: worst.t,
            index: worst.index,
            gated_on,
            status,
            advisory: false,
            note: String::new(),
        }
    }

    pub fn skipped(name: &str, anchor: &str, gated_on: String, reason: &str) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            slack: f64::NAN,
            tolerance: f64::NAN,
            t: f64::NAN,
            index: 0,
            gated_on,
            status: Status::Skipped,
            advisory: false,
            note: reason.into(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn is_failure(&self) -> bool {
        self.status == Status::Fail && !self.advisory
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn line(&self) -> String {
        let mut s = format!("{} {}", self.status.label(), self.name);
        if self.status != Status::Skipped {
            let _ = write!(
                s,
                " slack={:.3e} tol={:.1e} at t={:.6} idx={}",
                self.slack, self.tolerance, self.t, self.index
            );
        }
        if self.advisory {
            s.push_str(" (advisory)");
        }
        let _ = write!(s, " [{}]", self.gated_on);
        if !self.note.is_empty() {
            let _ = write!(s, " {}", self.note);
        }
        s
    }
}

/// Running minimum of a slack with its location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Worst {
    pub slack: f64,
    pub t: f64,
    pub index: usize,
}

impl Default for Worst {
    fn default() -> Self {
        Self { slack: f64::INFINITY, t: 0.0, index: 0 }
    }
}

impl Worst {
    pub fn update(&mut self, slack: f64, t: f64, index: usize) {
        if slack < self.slack || slack.is_nan() && !self.slack.is_nan() {
            *self = Self { slack, t, index };
        }
    }

    /// Minimum over a field of per-point slacks.
    pub fn scan(&mut self, t: f64, slacks: impl IntoIterator<Item = f64>) {
        for (i, s) in slacks.into_iter().enumerate() {
            self.update(s, t, i);
        }
    }
}

fn gate(traj: &Trajectory) -> String {
    let c = traj.config();
    format!(
        "variant={};twist={};data={}",
        match c.variant() {
            Variant::Cmaf => "cmaf",
            Variant::Ncmaf => "ncmaf",
        },
        c.twist().sign_class().as_str(),
        c.data_class().as_str()
    )
}

const A_SUP: &str = "sup phi_t <= sup phi_0 + (n log 2 - inf h) t";
const A_MINOINF: &str =
    "(1 - sqrt t)(phi_0 - inf phi_0 + 1) - C t + inf phi_0 - 1 <= phi_t, C = sup h + C_n";
const A_CLEF: &str = "H = t dphi/dt - (phi_t - phi_0) - n t <= 0";
const A_STBELOW: &str = "dphi/dt >= n log t - A Osc(phi_0) - C";
const A_DENS_MONO: &str = "sup f_t and int f_t log(1 + f_t) dmu nonincreasing";
const A_DENS_MIN: &str = "inf f_t nondecreasing";
const A_COMPARISON: &str = "phi_0 <= psi_0 implies phi_t <= psi_t";
const A_NCMAF: &str = "H = (1 - e^-t) dphi/dt - (phi_t - phi_0) - n t <= 0";
const A_SUBSOL: &str = "(1 - 2 beta t) phi_0 + 2 beta t u + n (t log t - t) <= phi_t";
const A_LELONG: &str = "nu(phi_t, z0) <= max(1 - 2 beta t, 0) gamma";
const A_MINODOT: &str = "dphi/dt(t + s) >= n log t - A Osc(phi_s) - C";
const A_SEMIGROUP: &str = "restart from phi_s reproduces phi_{t+s}";
const A_C2: &str = "t log tr(M_t) / (Osc(phi_{t/2}) + 1) bounded";
const A_ENERGY: &str = "t -> E(phi_t) nondecreasing when chi = 0";
const A_ISLOPE: &str = "dI/dt <= n log(1 + t c)";
const A_ICONVEX: &str = "I(t) convex when chi >= 0";
const A_VOLUME: &str = "int det M_t = (1 + t c)^n V";
const A_OSC: &str = "Osc(phi_t) independent of the approximation level";
const A_SMOOTHING: &str = "f_t in L^2 uniformly across levels once the atom is gone";

/// `phi_t <= psi_t` at every common recorded time.
pub fn verify_comparison(low: &Trajectory, high: &Trajectory, tol: f64) -> Result<VerdictReport> {
    let (a, b) = (low.config(), high.config());
    if a.grid() != b.grid() || !a.same_equation(b) {
        return Err(Error::ConfigMismatch("runs differ in grid, variant, h or twist".into()));
    }
    let mut w = Worst::default();
    let mut common = 0;
    for s in low.states() {
        if let Some(o) = high.state_at(s.t) {
            common += 1;
            w.scan(s.t, o.phi.values().iter().zip(s.phi.values()).map(|(p, q)| p - q));
        }
    }
    if common == 0 {
        return Err(Error::ConfigMismatch("runs share no recorded time".into()));
    }
    Ok(VerdictReport::new("comparison", A_COMPARISON, w, tol, gate(low))
        .with_note(format!("{common} common times")))
}

/// Reads the series (so a tampered series file is caught).
pub fn verify_sup_bound(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf {
        return VerdictReport::skipped("sup_bound", A_SUP, gate(traj), "CMAF only");
    }
    let n = cfg.grid().n() as f64;
    let rows = traj.series().rows();
    let rate = n * 2f64.ln() - cfg.h().min();
    let sup0 = rows[0].sup;
    let mut w = Worst::default();
    for (k, r) in rows.iter().enumerate() {
        w.update(sup0 + rate * r.t - r.sup, r.t, k);
    }
    let mut rep = VerdictReport::new("sup_bound", A_SUP, w, tol, gate(traj));
    rep.index = 0;
    rep.with_note("index is the series row")
}

/// `C_n = max_{0 < t <= T} (-1/(2 sqrt t) - (n/2) log t) + n log 2`; the
/// maximum of the bracket is at `t = 1/(4 n^2)`.
pub fn minoinf_constant(n: usize, horizon: f64) -> f64 {
    let n = n as f64;
    let f = |t: f64| -0.5 / t.sqrt() - 0.5 * n * t.ln();
    let t_star = 1.0 / (4.0 * n * n);
    let m = if horizon >= t_star { f(t_star) } else { f(horizon) };
    m + n * 2f64.ln() + 1e-9
}

/// Pointwise lower bound for bounded data on `(0, min(T, 1)]`.
pub fn verify_minoinf(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf {
        return VerdictReport::skipped("minoinf", A_MINOINF, gate(traj), "CMAF only");
    }
    if !cfg.data_class().is_bounded() {
        return VerdictReport::skipped("minoinf", A_MINOINF, gate(traj), "needs bounded data");
    }
    let n = cfg.grid().n();
    let c = cfg.h().max() + minoinf_constant(n, cfg.horizon().min(1.0));
    let phi0 = &traj.initial().phi;
    let inf0 = phi0.min();
    let mut w = Worst::default();
    for s in traj.states().iter().filter(|s| s.t <= 1.0) {
        let st = s.t.sqrt();
        w.scan(
            s.t,
            s.phi.values().iter().zip(phi0.values()).map(|(&p, &p0)| {
                p - ((1.0 - st) * (p0 - inf0 + 1.0) - c * s.t + inf0 - 1.0)
            }),
        );
    }
    VerdictReport::new("minoinf", A_MINOINF, w, tol, gate(traj)).with_note(format!("C = {c:.6}"))
}

pub fn verify_clef(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf {
        return VerdictReport::skipped("clef", A_CLEF, gate(traj), "CMAF only");
    }
    let n = cfg.grid().n() as f64;
    let phi0 = &traj.initial().phi;
    let mut w = Worst::default();
    for s in traj.states() {
        let t = s.t - traj.initial().t;
        w.scan(
            s.t,
            (0..phi0.values().len()).map(|i| {
                -(t * s.phi_dot.values()[i] - (s.phi.values()[i] - phi0.values()[i]) - n * t)
            }),
        );
    }
    VerdictReport::new("clef", A_CLEF, w, tol, gate(traj))
}

pub fn verify_ncmaf_bound(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Ncmaf {
        return VerdictReport::skipped("ncmaf_bound", A_NCMAF, gate(traj), "NCMAF only");
    }
    let n = cfg.grid().n() as f64;
    let phi0 = &traj.initial().phi;
    let mut w = Worst::default();
    for s in traj.states() {
        let t = s.t - traj.initial().t;
        let a = -(-t).exp_m1();
        w.scan(
            s.t,
            (0..phi0.values().len()).map(|i| {
                -(a * s.phi_dot.values()[i] - (s.phi.values()[i] - phi0.values()[i]) - n * t)
            }),
        );
    }
    VerdictReport::new("ncmaf_bound", A_NCMAF, w, tol, gate(traj))
}

fn stbelow_gate(traj: &Trajectory, a: f64, name: &str, anchor: &str) -> Option<VerdictReport> {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf {
        return Some(VerdictReport::skipped(name, anchor, gate(traj), "CMAF only"));
    }
    if !cfg.data_class().is_bounded() {
        return Some(VerdictReport::skipped(name, anchor, gate(traj), "needs bounded data"));
    }
    let tm = t_max(cfg.twist());
    if tm.is_finite() && !(a > 1.0 / (tm - cfg.horizon())) {
        return Some(VerdictReport::skipped(name, anchor, gate(traj), "needs A > 1/(T_max - T)"));
    }
    None
}

fn stbelow_worst(traj: &Trajectory, a: f64, c: f64, osc0: f64) -> Worst {
    let n = traj.config().grid().n() as f64;
    let t0 = traj.initial().t;
    let mut w = Worst::default();
    for s in traj.states().iter().filter(|s| s.t > t0) {
        let lt = n * (s.t - t0).ln();
        w.scan(s.t, s.phi_dot.values().iter().map(|&d| d - lt + a * osc0 + c));
    }
    w
}

/// Smallest `C` making the check pass with zero slack on `traj`.
pub fn calibrate_stbelow(traj: &Trajectory, a: f64) -> f64 {
    let osc0 = oscillation(&traj.initial().phi);
    -stbelow_worst(traj, a, 0.0, osc0).slack
}

pub fn verify_stbelow(traj: &Trajectory, a: f64, c: f64, tol: f64) -> VerdictReport {
    if let Some(r) = stbelow_gate(traj, a, "stbelow", A_STBELOW) {
        return r;
    }
    let osc0 = oscillation(&traj.initial().phi);
    VerdictReport::new("stbelow", A_STBELOW, stbelow_worst(traj, a, c, osc0), tol, gate(traj))
        .with_note(format!("A = {a}, C = {c:.6}"))
}

/// Restart semigroup check and the lower bound on `dphi/dt` after `s`.
pub fn verify_minodot(
    original: &Trajectory,
    restarted: &Trajectory,
    a: f64,
    c: f64,
    tol: f64,
) -> Result<Vec<VerdictReport>> {
    if !original.config().same_equation(restarted.config()) {
        return Err(Error::ConfigMismatch("restart uses a different equation".into()));
    }
    let mut w = Worst::default();
    let mut common = 0;
    for s in restarted.states() {
        if let Some(o) = original.state_at(s.t) {
            common += 1;
            w.scan(s.t, s.phi.values().iter().zip(o.phi.values()).map(|(a, b)| -(a - b).abs()));
        }
    }
    if common == 0 {
        return Err(Error::ConfigMismatch("restart shares no recorded time with the original".into()));
    }
    let semigroup = VerdictReport::new("semigroup", A_SEMIGROUP, w, TOL_SEMIGROUP, gate(restarted));
    let mut cfg_ok = stbelow_gate(restarted, a, "minodot", A_MINODOT);
    if cfg_ok.is_none() {
        let osc_s = oscillation(&restarted.initial().phi);
        cfg_ok = Some(
            VerdictReport::new("minodot", A_MINODOT, stbelow_worst(restarted, a, c, osc_s), tol, gate(restarted))
                .with_note(format!("s = {}, Osc(phi_s) = {osc_s:.6}", restarted.initial().t)),
        );
    }
    Ok(vec![semigroup, cfg_ok.unwrap()])
}

/// `sup f_t` and the `x log(1 + x)` Orlicz integral are nonincreasing, and
/// `sup f_t <= sup f_0`.
pub fn verify_density_monotone(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf {
        return VerdictReport::skipped("density_monotone", A_DENS_MONO, gate(traj), "CMAF only");
    }
    if !matches!(cfg.twist().sign_class(), SignClass::Zero | SignClass::Nonpos) {
        return VerdictReport::skipped("density_monotone", A_DENS_MONO, gate(traj), "needs chi <= 0");
    }
    let rows = traj.series().rows();
    let mut w = Worst::default();
    let mut which = "";
    for (k, p) in rows.windows(2).enumerate() {
        let before = w.slack;
        w.update(p[0].fmax - p[1].fmax, p[1].t, k + 1);
        if w.slack < before {
            which = "sup f";
        }
        let before = w.slack;
        w.update(p[0].orlicz_xlogx - p[1].orlicz_xlogx, p[1].t, k + 1);
        if w.slack < before {
            which = "orlicz";
        }
        let before = w.slack;
        w.update(rows[0].fmax - p[1].fmax, p[1].t, k + 1);
        if w.slack < before {
            which = "sup f vs sup f_0";
        }
    }
    VerdictReport::new("density_monotone", A_DENS_MONO, w, tol, gate(traj))
        .with_note(format!("index is the series row; worst term: {which}"))
}

pub fn verify_density_min(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf {
        return VerdictReport::skipped("density_min", A_DENS_MIN, gate(traj), "CMAF only");
    }
    if !matches!(cfg.twist().sign_class(), SignClass::Zero | SignClass::Nonneg) {
        return VerdictReport::skipped("density_min", A_DENS_MIN, gate(traj), "needs chi >= 0");
    }
    let rows = traj.series().rows();
    let mut w = Worst::default();
    for (k, p) in rows.windows(2).enumerate() {
        w.update(p[1].fmin - p[0].fmin, p[1].t, k + 1);
    }
    VerdictReport::new("density_min", A_DENS_MIN, w, tol, gate(traj)).with_note("index is the series row")
}

pub fn verify_energy_monotone(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf || cfg.twist().sign_class() != SignClass::Zero {
        return VerdictReport::skipped("energy_monotone", A_ENERGY, gate(traj), "CMAF with chi = 0 only");
    }
    let rows = traj.series().rows();
    let mut w = Worst::default();
    for (k, p) in rows.windows(2).enumerate() {
        w.update(p[1].e - p[0].e, p[1].t, k + 1);
    }
    VerdictReport::new("energy_monotone", A_ENERGY, w, tol, gate(traj)).with_note("index is the series row")
}

/// Forward-difference slopes of `I` against `n log(1 + t c)` at the larger
/// of the two interval endpoints.
pub fn verify_mean_value_slope(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf {
        return VerdictReport::skipped("mean_value_slope", A_ISLOPE, gate(traj), "CMAF only");
    }
    let n = cfg.grid().n() as f64;
    let c = cfg.twist().c();
    let rows = traj.series().rows();
    let mut w = Worst::default();
    for (k, p) in rows.windows(2).enumerate() {
        let slope = (p[1].i - p[0].i) / (p[1].t - p[0].t);
        let bound = n * (1.0 + p[0].t * c).ln().max((1.0 + p[1].t * c).ln());
        w.update(bound - slope, p[1].t, k + 1);
    }
    VerdictReport::new("mean_value_slope", A_ISLOPE, w, tol, gate(traj)).with_note("index is the series row")
}

/// Successive slopes of `I` are nondecreasing.
pub fn verify_mean_value_convex(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    if cfg.variant() != Variant::Cmaf {
        return VerdictReport::skipped("mean_value_convex", A_ICONVEX, gate(traj), "CMAF only");
    }
    if !matches!(cfg.twist().sign_class(), SignClass::Zero | SignClass::Nonneg) {
        return VerdictReport::skipped("mean_value_convex", A_ICONVEX, gate(traj), "needs chi >= 0");
    }
    let rows = traj.series().rows();
    let slopes: Vec<f64> = rows.windows(2).map(|p| (p[1].i - p[0].i) / (p[1].t - p[0].t)).collect();
    let mut w = Worst::default();
    for (k, s) in slopes.windows(2).enumerate() {
        w.update(s[1] - s[0], rows[k + 1].t, k + 1);
    }
    VerdictReport::new("mean_value_convex", A_ICONVEX, w, tol, gate(traj)).with_note("index is the series row")
}

/// Relative error of the volume identity.
pub fn verify_volume_identity(traj: &Trajectory, tol: f64) -> VerdictReport {
    let cfg = traj.config();
    let n = cfg.grid().n() as i32;
    let v = cfg.grid().volume();
    let c = cfg.twist().c();
    let mut w = Worst::default();
    for (k, r) in traj.series().rows().iter().enumerate() {
        let expect = (1.0 + r.t * c).powi(n) * v;
        w.update(-((r.vol - expect) / expect).abs(), r.t, k);
    }
    VerdictReport::new("volume_identity", A_VOLUME, w, tol, gate(traj)).with_note("index is the series row")
}

/// Advisory: the largest `t log max tr(M_t) / (Osc(phi_{t/2}) + 1)`, with
/// `phi_{t/2}` the latest recorded state at or before `t/2`.
pub fn verify_c2_diagnostic(traj: &Trajectory) -> Result<VerdictReport> {
    let cfg = traj.config();
    let t0 = traj.initial().t;
    let mut worst = 0.0f64;
    let mut at = Worst { slack: 0.0, t: t0, index: 0 };
    for s in traj.states().iter().filter(|s| s.t > t0) {
        let t = s.t - t0;
        let m = metric_matrix_unchecked(&s.phi, cfg.twist(), s.t)?;
        let tr = m.trace();
        let i = tr.argmax();
        let half = traj
            .states()
            .iter()
            .rfind(|o| o.t - t0 <= 0.5 * t + 1e-15)
            .unwrap_or(traj.initial());
        let ratio = t * tr.values()[i].ln() / (oscillation(&half.phi) + 1.0);
        if ratio.abs() > worst.abs() || !ratio.is_finite() {
            worst = ratio;
            at = Worst { slack: ratio, t: s.t, index: i };
        }
    }
    let mut r = VerdictReport::new("c2_diagnostic", A_C2, at, f64::INFINITY, gate(traj));
    r.advisory = true;
    r.slack = worst;
    if !worst.is_finite() {
        r.status = Status::Fail;
    }
    Ok(r.with_note("slack holds the largest ratio"))
}

/// Relative spread `(max - min)/max` of `Osc(phi_t)` across levels, at
/// each of `times`; passes when at most [`OSC_SPREAD`].
pub fn verify_oscillation_spread(runs: &[Trajectory], times: &[f64]) -> Result<VerdictReport> {
    let mut w = Worst::default();
    for &t in times {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (j, r) in runs.iter().enumerate() {
            let s = r
                .state_at(t)
                .ok_or_else(|| Error::InvalidConfig(format!("level {j} has no state at t = {t}")))?;
            let o = oscillation(&s.phi);
            lo = lo.min(o);
            hi = hi.max(o);
        }
        w.update(OSC_SPREAD - (hi - lo) / hi, t, 0);
    }
    let g = runs.first().map(gate).unwrap_or_default();
    Ok(VerdictReport::new("oscillation_spread", A_OSC, w, 0.0, g))
}

/// Pointwise subsolution bound of the last level, with `u` solving
/// `(2 beta)^n det(I + H(u)) = e^{2 beta u - 2 beta phi_{0,J} + h}`, on
/// `0 <= t <= 1/(2 beta)`.
pub fn verify_lelong_subsolution(traj: &Trajectory, u: &PotentialField, beta: f64, tol: f64) -> Result<VerdictReport> {
    let cfg = traj.config();
    let g = gate(traj);
    if cfg.variant() != Variant::Cmaf || cfg.twist().sign_class() != SignClass::Zero {
        return Ok(VerdictReport::skipped("lelong_subsolution", A_SUBSOL, g, "CMAF with chi = 0 only"));
    }
    cfg.grid().check_same(u.grid())?;
    let n = cfg.grid().n() as f64;
    let alpha = 2.0 * beta;
    let phi0 = &traj.initial().phi;
    let mut w = Worst::default();
    for s in traj.states().iter().filter(|s| s.t <= 1.0 / alpha) {
        let t = s.t;
        let tl = if t > 0.0 { n * (t * t.ln() - t) } else { 0.0 };
        w.scan(
            t,
            (0..phi0.values().len()).map(|i| {
                s.phi.values()[i] - ((1.0 - alpha * t) * phi0.values()[i] + alpha * t * u.values()[i] + tl)
            }),
        );
    }
    Ok(VerdictReport::new("lelong_subsolution", A_SUBSOL, w, tol, g).with_note(format!("beta = {beta}")))
}

/// Estimated Lelong numbers of the last level at `times` against
/// `max(1 - 2 beta t, 0) gamma + margin`, fitted on the radius `window`
/// (a few mollification radii of the last level). One report per time.
pub fn verify_lelong_decay(
    runs: &[Trajectory],
    z0: &TorusPoint,
    gamma: f64,
    beta: f64,
    times: &[f64],
    window: (f64, f64),
    margin: f64,
) -> Result<Vec<VerdictReport>> {
    let last = runs.last().ok_or_else(|| Error::InvalidConfig("no runs".into()))?;
    let mut out = Vec::new();
    for &t in times {
        let s = last
            .state_at(t)
            .ok_or_else(|| Error::InvalidConfig(format!("no state at t = {t}")))?;
        let nu = lelong_estimate_window(&s.phi, z0, window.0, window.1)?;
        let bound = (1.0 - 2.0 * beta * t).max(0.0) * gamma;
        let w = Worst { slack: bound + margin - nu, t, index: 0 };
        out.push(
            VerdictReport::new(&format!("lelong_decay@{t}"), A_LELONG, w, 0.0, gate(last))
                .with_note(format!("nu = {nu:.4}, bound = {bound:.4} + {margin}")),
        );
    }
    Ok(out)
}

/// At time `t`, every level has finite `max f_t` and the relative spread of
/// `||f_t||_{L^2}` across levels is at most `spread`.
pub fn verify_smoothing(runs: &[Trajectory], t: f64, spread: f64) -> Result<VerdictReport> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut finite = true;
    for (j, r) in runs.iter().enumerate() {
        let row = r
            .series()
            .rows()
            .iter()
            .find(|x| (x.t - t).abs() <= 1e-12 * t.max(1.0))
            .ok_or_else(|| Error::InvalidConfig(format!("level {j} has no row at t = {t}")))?;
        finite &= row.fmax.is_finite() && row.f_l2.is_finite();
        lo = lo.min(row.f_l2);
        hi = hi.max(row.f_l2);
    }
    let rel = (hi - lo) / lo;
    let slack = if finite { spread - rel } else { f64::NEG_INFINITY };
    let g = runs.first().map(gate).unwrap_or_default();
    Ok(VerdictReport::new("smoothing_l2", A_SMOOTHING, Worst { slack, t, index: 0 }, 0.0, g)
        .with_note(format!("||f||_2 in [{lo:.5}, {hi:.5}]")))
}

/// Parameters for the single-trajectory checks run by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckParams {
    pub tolerance: Option<f64>,
    pub stbelow_a: f64,
    pub stbelow_c: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self { tolerance: None, stbelow_a: 1.0, stbelow_c: 0.0 }
    }
}

pub const TRAJECTORY_CHECKS: [&str; 12] = [
    "sup_bound",
    "minoinf",
    "clef",
    "ncmaf_bound",
    "stbelow",
    "density_monotone",
    "density_min",
    "energy_monotone",
    "mean_value_slope",
    "mean_value_convex",
    "volume_identity",
    "c2_diagnostic",
];

/// Run a single-trajectory check by name; `None` for an unknown name.
pub fn check_by_name(name: &str, traj: &Trajectory, p: &CheckParams) -> Option<Result<VerdictReport>> {
    let tol = |d: f64| p.tolerance.unwrap_or(d);
    Some(Ok(match name {
        "sup_bound" => verify_sup_bound(traj, tol(TOL_SUP_BOUND)),
        "minoinf" => verify_minoinf(traj, tol(TOL_CLEF)),
        "clef" => verify_clef(traj, tol(TOL_CLEF)),
        "ncmaf_bound" => verify_ncmaf_bound(traj, tol(TOL_NCMAF)),
        "stbelow" => verify_stbelow(traj, p.stbelow_a, p.stbelow_c, tol(TOL_CLEF)),
        "density_monotone" => verify_density_monotone(traj, tol(TOL_DENSITY)),
        "density_min" => verify_density_min(traj, tol(TOL_DENSITY)),
        "energy_monotone" => verify_energy_monotone(traj, tol(TOL_ENERGY)),
        "mean_value_slope" => verify_mean_value_slope(traj, tol(TOL_MEAN_SLOPE)),
        "mean_value_convex" => verify_mean_value_convex(traj, tol(TOL_MEAN_CONVEX)),
        "volume_identity" => verify_volume_identity(traj, tol(TOL_VOLUME)),
        "c2_diagnostic" => return Some(verify_c2_diagnostic(traj)),
        _ => return None,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, FlowConfig, TwistSpec};
    use crate::functionals::FunctionalSeries;
    use crate::grid::TorusGrid;
    use std::f64::consts::PI;

    fn smooth_run(variant: Variant, c: f64) -> Trajectory {
        let g = TorusGrid::unit(1, 16).unwrap();
        let phi0 = PotentialField::from_fn(g, |x| 0.01 * (2.0 * PI * x[0]).cos() + 0.005 * (2.0 * PI * x[1]).sin());
        let cfg = FlowConfig::new(g)
            .with_variant(variant)
            .with_twist(TwistSpec::scalar(g, c))
            .with_horizon(0.1)
            .with_record_every(5);
        run(&phi0, &cfg).unwrap()
    }

    fn tampered(traj: &Trajectory, edit: impl Fn(&mut crate::functionals::SeriesRow)) -> Trajectory {
        let mut rows = traj.series().rows().to_vec();
        edit(rows.last_mut().unwrap());
        let series = FunctionalSeries::from_rows(rows).unwrap();
        Trajectory::assemble(traj.config().clone(), traj.states().to_vec(), series).unwrap()
    }

    #[test]
    fn smooth_run_passes_core_checks() {
        let tr = smooth_run(Variant::Cmaf, 0.0);
        for name in TRAJECTORY_CHECKS {
            let rep = check_by_name(name, &tr, &CheckParams::default()).unwrap().unwrap();
            assert!(!rep.is_failure(), "{}", rep.line());
        }
        assert!(verify_clef(&tr, TOL_CLEF).passed());
        assert!(verify_volume_identity(&tr, TOL_VOLUME).passed());
    }

    #[test]
    fn variant_gating_skips() {
        let tr = smooth_run(Variant::Ncmaf, 0.0);
        assert_eq!(verify_clef(&tr, TOL_CLEF).status, Status::Skipped);
        assert_eq!(verify_sup_bound(&tr, TOL_SUP_BOUND).status, Status::Skipped);
        assert!(verify_ncmaf_bound(&tr, TOL_NCMAF).passed());
        let tr = smooth_run(Variant::Cmaf, 0.5);
        assert_eq!(verify_energy_monotone(&tr, TOL_ENERGY).status, Status::Skipped);
        assert_eq!(verify_density_monotone(&tr, TOL_DENSITY).status, Status::Skipped);
        assert!(verify_ncmaf_bound(&tr, TOL_NCMAF).status == Status::Skipped);
    }

    #[test]
    fn tampered_series_fail() {
        let tr = smooth_run(Variant::Cmaf, 0.0);
        let bad = tampered(&tr, |r| r.sup += 1.0);
        let rep = verify_sup_bound(&bad, TOL_SUP_BOUND);
        assert!(rep.is_failure());
        assert!((rep.slack + 1.0).abs() < 0.2, "{}", rep.line());
        let bad = tampered(&tr, |r| r.e -= 1.0);
        assert!(verify_energy_monotone(&bad, TOL_ENERGY).is_failure());
        let bad = tampered(&tr, |r| r.vol *= 1.0 + 1e-3);
        assert!(verify_volume_identity(&bad, TOL_VOLUME).is_failure());
        let bad = tampered(&tr, |r| r.fmax += 1.0);
        assert!(verify_density_monotone(&bad, TOL_DENSITY).is_failure());
    }

    #[test]
    fn comparison_detects_crossing() {
        let low = smooth_run(Variant::Cmaf, 0.0);
        let phi0 = low.initial().phi.add_constant(0.1);
        let high = run(&phi0, low.config()).unwrap();
        assert!(verify_comparison(&low, &high, TOL_COMPARISON).unwrap().passed());
        assert!(verify_comparison(&high, &low, TOL_COMPARISON).unwrap().is_failure());
        let g8 = TorusGrid::unit(1, 8).unwrap();
        let other = run(&PotentialField::zeros(g8), &FlowConfig::new(g8).with_horizon(0.0)).unwrap();
        assert!(verify_comparison(&low, &other, TOL_COMPARISON).is_err());
    }

    #[test]
    fn unknown_check_name() {
        let tr = smooth_run(Variant::Cmaf, 0.0);
        assert!(check_by_name("nope", &tr, &CheckParams::default()).is_none());
        let p = CheckParams { tolerance: Some(1e3), ..Default::default() };
        let bad = tampered(&tr, |r| r.sup += 1.0);
        assert!(check_by_name("sup_bound", &bad, &p).unwrap().unwrap().passed());
    }

    #[test]
    fn report_line_format() {
        let tr = smooth_run(Variant::Cmaf, 0.0);
        let line = verify_clef(&tr, TOL_CLEF).line();
        assert!(line.starts_with("PASS clef slack="), "{line}");
        assert!(line.contains("[variant=cmaf;twist=zero;"), "{line}");
    }
}
