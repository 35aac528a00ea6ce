//! Method-of-lines integration of the scalar flows.
//!
//! Space is pseudospectral, time is classical RK4 by default. The step is
//! `dt = safety * h_grid^2 * min_eig / (4n)`: the flow linearizes to
//! `tr_M(dd^c .)`, whose stiffness grows like the inverse of the smallest
//! metric eigenvalue.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{self, FunctionalSeries};
use crate::geometry::{complex_hessian, HermitianField};
use crate::grid::{argmin, PotentialField, TorusGrid};
use crate::initial::{ApproximationSequence, DataClass};
use crate::spectral::{spectral_with, Spectral};

/// Sign of `c I + H(psi_chi)` over the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignClass {
    Zero,
    Nonneg,
    Nonpos,
    Mixed,
}

impl SignClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignClass::Zero => "zero",
            SignClass::Nonneg => "nonneg",
            SignClass::Nonpos => "nonpos",
            SignClass::Mixed => "mixed",
        }
    }
}

const SIGN_TOL: f64 = 1e-12;
/// Left end of the real stability interval of classical RK4.
const RK4_REAL_EDGE: f64 = 2.785;

/// The twisting form `chi = c omega + dd^c psi_chi`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistSpec {
    c: f64,
    psi_chi: PotentialField,
    hessian: HermitianField,
    hess_norm: f64,
    sign: SignClass,
}

impl TwistSpec {
    pub fn new(c: f64, psi_chi: PotentialField) -> Result<Self> {
        if !c.is_finite() || !psi_chi.is_finite() {
            return Err(Error::InvalidConfig("twist must be finite".into()));
        }
        let hessian = complex_hessian(&psi_chi);
        let (lo, hi) = hessian.eigen_range();
        let hess_norm = lo.abs().max(hi.abs());
        let (lo, hi) = (lo + c, hi + c);
        let sign = if lo.abs() <= SIGN_TOL && hi.abs() <= SIGN_TOL {
            SignClass::Zero
        } else if lo >= -SIGN_TOL {
            SignClass::Nonneg
        } else if hi <= SIGN_TOL {
            SignClass::Nonpos
        } else {
            SignClass::Mixed
        };
        Ok(Self { c, psi_chi, hessian, hess_norm, sign })
    }

    pub fn zero(grid: TorusGrid) -> Self {
        Self::scalar(grid, 0.0)
    }

    /// Cohomologically scalar twist, `psi_chi = 0`.
    pub fn scalar(grid: TorusGrid, c: f64) -> Self {
        Self::new(c, PotentialField::zeros(grid)).expect("finite twist")
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn psi_chi(&self) -> &PotentialField {
        &self.psi_chi
    }

    /// Cached `H(psi_chi)`.
    pub fn hessian(&self) -> &HermitianField {
        &self.hessian
    }

    pub fn has_exact_part(&self) -> bool {
        self.hess_norm > 0.0
    }

    /// Largest eigenvalue magnitude of `H(psi_chi)`.
    pub fn hessian_norm(&self) -> f64 {
        self.hess_norm
    }

    pub fn sign_class(&self) -> SignClass {
        self.sign
    }

    pub fn is_zero(&self) -> bool {
        self.c == 0.0 && !self.has_exact_part()
    }

    /// Largest horizon with `|t c| <= 1/2` and `|t H(psi_chi)| <= 1/2`, the
    /// discrete form of `omega/2 <= theta_t <= 2 omega`.
    pub fn max_horizon(&self) -> f64 {
        let mut t = f64::INFINITY;
        if self.c != 0.0 {
            t = t.min(0.5 / self.c.abs());
        }
        if self.hess_norm > 0.0 {
            t = t.min(0.5 / self.hess_norm);
        }
        t
    }
}

/// `sup { t >= 0 : 1 + t c >= 0 }`.
pub fn t_max(twist: &TwistSpec) -> f64 {
    if twist.c() >= 0.0 {
        f64::INFINITY
    } else {
        1.0 / twist.c().abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Cmaf,
    Ncmaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    /// Classical RK4 with the parabolic step bound.
    Rk4,
    /// Linearly implicit Euler in the flat operator `tr H / min_eig`.
    SemiImplicit,
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    variant: Variant,
    h: PotentialField,
    twist: TwistSpec,
    horizon: f64,
    policy: StepPolicy,
    safety: f64,
    dt_init: Option<f64>,
    dt_min: f64,
    record_every: usize,
    checkpoints: Vec<f64>,
    eig_guard: f64,
    dealias: bool,
    data_class: DataClass,
}

impl FlowConfig {
    /// CMAF with `h = 0`, no twist, horizon 1, RK4 at safety 0.9.
    pub fn new(grid: TorusGrid) -> Self {
        Self {
            variant: Variant::Cmaf,
            h: PotentialField::zeros(grid),
            twist: TwistSpec::zero(grid),
            horizon: 1.0,
            policy: StepPolicy::Rk4,
            safety: 0.9,
            dt_init: None,
            dt_min: 1e-12,
            record_every: 50,
            checkpoints: Vec::new(),
            eig_guard: 1e-10,
            dealias: false,
            data_class: DataClass::Smooth,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.h.grid()
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.variant = v;
        self
    }

    /// Set the density exponent, renormalized so that `int e^h = V`.
    pub fn with_h(mut self, h: PotentialField) -> Result<Self> {
        self.grid().check_same(h.grid())?;
        if !h.is_finite() {
            return Err(Error::InvalidConfig("h must be finite".into()));
        }
        self.h = normalize_h(&h);
        Ok(self)
    }

    pub fn with_twist(mut self, twist: TwistSpec) -> Self {
        self.twist = twist;
        self
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.horizon = t;
        self
    }

    pub fn with_policy(mut self, p: StepPolicy) -> Self {
        self.policy = p;
        self
    }

    pub fn with_safety(mut self, s: f64) -> Self {
        self.safety = s;
        self
    }

    /// Requested step. The parabolic bound still applies to RK4.
    pub fn with_dt_init(mut self, dt: Option<f64>) -> Self {
        self.dt_init = dt;
        self
    }

    pub fn with_dt_min(mut self, dt: f64) -> Self {
        self.dt_min = dt;
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    /// Times the integrator lands on exactly and always records.
    pub fn with_checkpoints(mut self, mut ts: Vec<f64>) -> Self {
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ts.dedup();
        self.checkpoints = ts;
        self
    }

    pub fn with_eig_guard(mut self, g: f64) -> Self {
        self.eig_guard = g;
        self
    }

    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    /// Regularity class of the data the run starts from (verifier gating).
    pub fn with_data_class(mut self, c: DataClass) -> Self {
        self.data_class = c;
        self
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn h(&self) -> &PotentialField {
        &self.h
    }
    pub fn twist(&self) -> &TwistSpec {
        &self.twist
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn policy(&self) -> StepPolicy {
        self.policy
    }
    pub fn safety(&self) -> f64 {
        self.safety
    }
    pub fn dt_init(&self) -> Option<f64> {
        self.dt_init
    }
    pub fn dt_min(&self) -> f64 {
        self.dt_min
    }
    pub fn record_every(&self) -> usize {
        self.record_every
    }
    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }
    pub fn eig_guard(&self) -> f64 {
        self.eig_guard
    }
    pub fn dealias(&self) -> bool {
        self.dealias
    }
    pub fn data_class(&self) -> DataClass {
        self.data_class
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let grid = *self.grid();
        self.twist.psi_chi().grid().check_same(&grid)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be finite and >= 0, got {}", self.horizon));
        }
        let mass = self.h.map(f64::exp).mean();
        if (mass - 1.0).abs() > 1e-10 {
            return bad(format!("int e^h / V = {mass}, expected 1"));
        }
        match self.variant {
            Variant::Cmaf => {
                let tm = t_max(&self.twist);
                if self.horizon >= tm {
                    return bad(format!("horizon {} >= T_max {tm}", self.horizon));
                }
            }
            Variant::Ncmaf => {
                if !self.twist.is_zero() {
                    return bad("NCMAF requires c = 0 and psi_chi = 0".into());
                }
            }
        }
        let hmax = self.twist.max_horizon();
        if self.horizon > hmax * (1.0 + 1e-12) {
            return bad(format!(
                "horizon {} exceeds {hmax}, the limit for omega/2 <= theta_t <= 2 omega",
                self.horizon
            ));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return bad(format!("safety must lie in (0, 1), got {}", self.safety));
        }
        if !(self.dt_min > 0.0) {
            return bad(format!("dt_min must be > 0, got {}", self.dt_min));
        }
        if let Some(dt) = self.dt_init {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt_init must be > 0, got {dt}"));
            }
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        if self.checkpoints.iter().any(|&c| !(c > 0.0 && c <= self.horizon)) {
            return bad("checkpoints must lie in (0, horizon]".into());
        }
        if !(self.eig_guard > 0.0) {
            return bad("eig_guard must be > 0".into());
        }
        Ok(())
    }

    /// Same equation, grid and reference data (used to pair trajectories).
    pub fn same_equation(&self, other: &FlowConfig) -> bool {
        self.variant == other.variant
            && self.h == other.h
            && self.twist.c() == other.twist.c()
            && self.twist.psi_chi() == other.twist.psi_chi()
    }
}

/// `h - log(mean e^h)`, so that `int e^h omega^n = V`.
pub fn normalize_h(h: &PotentialField) -> PotentialField {
    let m = h.max();
    let mean = h.map(|v| (v - m).exp()).mean();
    h.add_constant(-(m + mean.ln()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub phi: PotentialField,
    /// Right-hand side at `(t, phi)`.
    pub phi_dot: PotentialField,
    pub min_eig: f64,
    pub step_count: u64,
    /// Step that produced this state (0 for an initial state).
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    config: FlowConfig,
    states: Vec<FlowState>,
    series: FunctionalSeries,
}

impl Trajectory {
    /// Reassemble a trajectory from stored parts (e.g. reloaded snapshots
    /// and a series file). State times must increase and each must have a
    /// series row; the series may be denser than the states.
    pub fn assemble(config: FlowConfig, states: Vec<FlowState>, series: FunctionalSeries) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidConfig("a trajectory needs at least one state".into()));
        }
        if states.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidConfig("state times must increase".into()));
        }
        let times = series.times();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        if let Some(s) = states.iter().find(|s| !times.iter().any(|&t| close(t, s.t))) {
            return Err(Error::InvalidConfig(format!("state at t = {} has no series row", s.t)));
        }
        Ok(Self { config, states, series })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn states(&self) -> &[FlowState] {
        &self.states
    }

    pub fn series(&self) -> &FunctionalSeries {
        &self.series
    }

    pub fn initial(&self) -> &FlowState {
        &self.states[0]
    }

    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Recorded state at time `t` (to 1e-12 relative).
    pub fn state_at(&self, t: f64) -> Option<&FlowState> {
        self.states.iter().find(|s| (s.t - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

enum Symbols {
    One { s: Vec<f64> },
    Two { s11: Vec<f64>, s22: Vec<f64>, sre: Vec<f64>, sim: Vec<f64> },
}

/// Reusable integrator for one configuration.
pub struct Stepper<'a> {
    config: &'a FlowConfig,
    spec: Arc<Spectral>,
    sym: Symbols,
    /// `-|k|^2 / 4`, the flat complex Laplacian.
    flat: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(config: &'a FlowConfig) -> Result<Self> {
        config.validate()?;
        let grid = *config.grid();
        let spec = spectral_with(&grid, config.dealias);
        let len = grid.len();
        let mut flat = Vec::with_capacity(len);
        let sym = if grid.n() == 1 {
            let mut s = Vec::with_capacity(len);
            for i in 0..len {
                let k = spec.wavevector(i);
                let v = -0.25 * (k[0] * k[0] + k[1] * k[1]) * spec.mask(i);
                s.push(v);
                flat.push(v);
            }
            Symbols::One { s }
        } else {
            let (mut s11, mut s22, mut sre, mut sim) =
                (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
            for i in 0..len {
                let k = spec.wavevector(i);
                let m = spec.mask(i);
                s11.push(-0.25 * (k[0] * k[0] + k[1] * k[1]) * m);
                s22.push(-0.25 * (k[2] * k[2] + k[3] * k[3]) * m);
                sre.push(-0.25 * (k[0] * k[2] + k[1] * k[3]) * m);
                sim.push(-0.25 * (k[0] * k[3] - k[1] * k[2]) * m);
                flat.push(s11[i] + s22[i]);
            }
            Symbols::Two { s11, s22, sre, sim }
        };
        Ok(Self { config, spec, sym, flat })
    }

    pub fn config(&self) -> &FlowConfig {
        self.config
    }

    /// Right-hand side and smallest metric eigenvalue at `(t, phi)`.
    pub fn eval(&self, t: f64, phi: &[f64]) -> Result<(Vec<f64>, f64)> {
        let cfg = self.config;
        let twist = cfg.twist();
        let shift = 1.0 + t * twist.c();
        let exact = twist.has_exact_part();
        let th = twist.hessian();
        let h = cfg.h().values();
        let ncmaf = cfg.variant() == Variant::Ncmaf;
        let spec = self.spec.forward(phi);
        let len = phi.len();
        let mut out = Vec::with_capacity(len);
        let mut min_eig = f64::INFINITY;
        let mut worst = 0;
        match &self.sym {
            Symbols::One { s } => {
                let w: Vec<Complex64> = spec.iter().zip(s).map(|(c, s)| c * s).collect();
                let a = self.spec.inverse_real(w);
                for i in 0..len {
                    let mut m = shift + a[i];
                    if exact {
                        m += t * th.at(i).trace();
                    }
                    if !(m > min_eig) {
                        min_eig = m;
                        worst = i;
                    }
                    let mut r = m.ln() - h[i];
                    if ncmaf {
                        r += phi[i];
                    }
                    out.push(r);
                }
            }
            Symbols::Two { s11, s22, sre, sim } => {
                let i1 = Complex64::i();
                let mut diag = Vec::with_capacity(len);
                let mut off = Vec::with_capacity(len);
                for i in 0..len {
                    let c = spec[i];
                    diag.push(c * s11[i] + i1 * c * s22[i]);
                    off.push(c * sre[i] + i1 * c * sim[i]);
                }
                let (a, d) = self.spec.inverse_pair(diag);
                let (bre, bim) = self.spec.inverse_pair(off);
                for i in 0..len {
                    let (mut ai, mut di, mut bi) = (shift + a[i], shift + d[i], Complex64::new(bre[i], bim[i]));
                    if exact {
                        if let crate::herm::Herm::Two { a: pa, d: pd, b: pb } = th.at(i) {
                            ai += t * pa;
                            di += t * pd;
                            bi += pb * t;
                        }
                    }
                    let mid = 0.5 * (ai + di);
                    let rad = (0.25 * (ai - di) * (ai - di) + bi.norm_sqr()).sqrt();
                    let det = ai * di - bi.norm_sqr();
                    let l0 = if mid > 0.0 { det / (mid + rad) } else { mid - rad };
                    if !(l0 > min_eig) {
                        min_eig = l0;
                        worst = i;
                    }
                    let mut r = det.ln() - h[i];
                    if ncmaf {
                        r += phi[i];
                    }
                    out.push(r);
                }
            }
        }
        if !(min_eig > 0.0) {
            return Err(Error::KaehlerConeViolation { min_eig, index: worst });
        }
        if out.iter().any(|v| !v.is_finite()) {
            let bad = out.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::KaehlerConeViolation { min_eig: f64::NAN, index: bad });
        }
        Ok((out, min_eig))
    }

    /// State at `(t, phi)` with its cached right-hand side.
    pub fn state(&self, t: f64, phi: PotentialField, step_count: u64, dt: f64) -> Result<FlowState> {
        self.config.grid().check_same(phi.grid())?;
        let (rhs, min_eig) = self.eval(t, phi.values())?;
        let phi_dot = PotentialField::from_values(*phi.grid(), rhs)?;
        Ok(FlowState { t, phi, phi_dot, min_eig, step_count, dt })
    }

    /// Parabolic step bound at the given state.
    pub fn stable_dt(&self, state: &FlowState) -> f64 {
        let g = self.config.grid();
        let hg = g.spacing();
        // The linearized operator has spectral radius at most
        // n pi^2 / (2 h^2 min_eig); RK4 is stable on [-RK4_REAL_EDGE, 0].
        let cfl = self.config.safety * RK4_REAL_EDGE * 2.0 * hg * hg * state.min_eig
            / (g.n() as f64 * PI * PI);
        match (self.config.policy, self.config.dt_init) {
            (StepPolicy::Rk4, Some(dt)) => dt.min(cfl),
            (StepPolicy::Rk4, None) => cfl,
            (StepPolicy::SemiImplicit, Some(dt)) => dt,
            (StepPolicy::SemiImplicit, None) => 8.0 * cfl,
        }
    }

    fn next_stop(&self, t: f64) -> f64 {
        let eps = 1e-14 * t.abs().max(1.0);
        self.config
            .checkpoints
            .iter()
            .copied()
            .find(|&c| c > t + eps)
            .unwrap_or(self.config.horizon)
            .min(self.config.horizon)
    }

    /// One accepted step, halving on cone violation or non-finite values.
    pub fn step(&self, st: &FlowState) -> Result<FlowState> {
        let target = self.next_stop(st.t);
        let mut dt = self.stable_dt(st);
        let mut clamped = false;
        if st.t + dt >= target - 1e-14 * target.abs().max(1.0) {
            dt = target - st.t;
            clamped = true;
        }
        if !clamped && dt < self.config.dt_min {
            return Err(Error::StepSizeUnderflow { t: st.t, dt, dt_min: self.config.dt_min });
        }
        loop {
            let t_new = if clamped { target } else { st.t + dt };
            match self.try_step(st, dt, t_new) {
                Ok(next) if next.min_eig >= self.config.eig_guard && next.phi.is_finite() => {
                    return Ok(next)
                }
                Ok(_) | Err(Error::KaehlerConeViolation { .. }) => {
                    dt *= 0.5;
                    clamped = false;
                    if dt < self.config.dt_min {
                        return Err(Error::StepSizeUnderflow {
                            t: st.t,
                            dt,
                            dt_min: self.config.dt_min,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn try_step(&self, st: &FlowState, dt: f64, t_new: f64) -> Result<FlowState> {
        let y = st.phi.values();
        let k1 = st.phi_dot.values();
        let new = match self.config.policy {
            StepPolicy::Rk4 => {
                let stage = |k: &[f64], a: f64| -> Vec<f64> {
                    y.iter().zip(k).map(|(y, k)| y + a * k).collect()
                };
                let (k2, _) = self.eval(st.t + 0.5 * dt, &stage(k1, 0.5 * dt))?;
                let (k3, _) = self.eval(st.t + 0.5 * dt, &stage(&k2, 0.5 * dt))?;
                let (k4, _) = self.eval(st.t + dt, &stage(&k3, dt))?;
                (0..y.len())
                    .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect::<Vec<f64>>()
            }
            StepPolicy::SemiImplicit => {
                let kappa = 1.0 / st.min_eig;
                let py = self.spec.forward(y);
                let pr = self.spec.forward(k1);
                let w: Vec<Complex64> = (0..y.len())
                    .map(|i| {
                        let s = kappa * self.flat[i];
                        (py[i] + (pr[i] - py[i] * s) * dt) / (1.0 - dt * s)
                    })
                    .collect();
                self.spec.inverse_real(w)
            }
        };
        if new.iter().any(|v| !v.is_finite()) {
            return Err(Error::KaehlerConeViolation { min_eig: f64::NAN, index: 0 });
        }
        let phi = PotentialField::from_values(*st.phi.grid(), new)?;
        self.state(t_new, phi, st.step_count + 1, dt)
    }

    /// Integrate from `start` to the horizon, recording every
    /// `record_every` steps, at checkpoints, and at the end.
    pub fn integrate(&self, start: FlowState) -> Result<Trajectory> {
        let cfg = self.config;
        let mut states = vec![start];
        let mut series = FunctionalSeries::default();
        series.push(functionals::series_row(&states[0], cfg)?);
        let mut cur = states[0].clone();
        let end = cfg.horizon;
        let eps = 1e-14 * end.abs().max(1.0);
        while cur.t < end - eps {
            let next = self.step(&cur).map_err(|e| e.at_time(cur.t))?;
            let on_checkpoint = cfg.checkpoints.contains(&next.t);
            let done = next.t >= end - eps;
            if on_checkpoint || done || next.step_count % cfg.record_every as u64 == 0 {
                series.push(functionals::series_row(&next, cfg).map_err(|e| e.at_time(next.t))?);
                states.push(next.clone());
            }
            cur = next;
        }
        Ok(Trajectory { config: cfg.clone(), states, series })
    }
}

/// `log det M_t(phi) - h` (CMAF) or that plus `phi` (NCMAF).
pub fn rhs(t: f64, phi: &PotentialField, config: &FlowConfig) -> Result<PotentialField> {
    let s = Stepper::new(config)?;
    config.grid().check_same(phi.grid())?;
    let (v, _) = s.eval(t, phi.values())?;
    PotentialField::from_values(*phi.grid(), v)
}

/// One adaptive step (builds a throwaway [`Stepper`]).
pub fn step(state: &FlowState, config: &FlowConfig) -> Result<FlowState> {
    Stepper::new(config)?.step(state)
}

/// Run from `phi0` at `t = 0` to the horizon.
pub fn run(phi0: &PotentialField, config: &FlowConfig) -> Result<Trajectory> {
    let s = Stepper::new(config)?;
    let start = s.state(0.0, phi0.clone(), 0, 0.0).map_err(|e| e.at_time(0.0))?;
    s.integrate(start)
}

/// Continue from an intermediate state (e.g. a reloaded snapshot) to the
/// horizon. The right-hand side is recomputed from `(t, phi)`.
pub fn run_from(t0: f64, phi: &PotentialField, step_count: u64, config: &FlowConfig) -> Result<Trajectory> {
    let s = Stepper::new(config)?;
    let start = s.state(t0, phi.clone(), step_count, 0.0).map_err(|e| e.at_time(t0))?;
    s.integrate(start)
}

/// Run every level of an approximation sequence, concurrently. Each run is
/// tagged with the data class of the sequence.
pub fn run_levels(seq: &ApproximationSequence, config: &FlowConfig) -> Result<Vec<Trajectory>> {
    let cfg = config.clone().with_data_class(seq.spec().data_class());
    seq.levels().par_iter().map(|lvl| run(&lvl.phi, &cfg)).collect()
}

/// Cauchy report for the decreasing limit of approximating flows.
#[derive(Debug, Clone)]
pub struct LimitReport {
    pub t: f64,
    /// Last level's potential at `t`.
    pub limit: PotentialField,
    /// `sup |phi_{t,j} - phi_{t,j+1}|`.
    pub decrements: Vec<f64>,
    /// Successive decrement ratios.
    pub ratios: Vec<f64>,
    /// Largest `phi_{t,j+1} - phi_{t,j}` (positive means non-monotone).
    pub monotone_defect: f64,
    /// Decrements strictly decreasing.
    pub converged: bool,
}

/// The limit `phi_t = lim_j phi_{t,j}` from runs ordered by level.
pub fn limit_potential(runs: &[Trajectory], t: f64) -> Result<LimitReport> {
    if runs.len() < 3 {
        return Err(Error::InvalidConfig(format!("need >= 3 levels, got {}", runs.len())));
    }
    let mut fields = Vec::with_capacity(runs.len());
    for (j, r) in runs.iter().enumerate() {
        let s = r
            .state_at(t)
            .ok_or_else(|| Error::InvalidConfig(format!("level {j} has no state at t = {t}")))?;
        fields.push(&s.phi);
    }
    let mut decrements = Vec::new();
    let mut defect = f64::NEG_INFINITY;
    for w in fields.windows(2) {
        decrements.push(w[0].sup_distance(w[1])?);
        let d = w[1].zip_map(w[0], |a, b| a - b)?;
        defect = defect.max(d.max());
    }
    let ratios: Vec<f64> = decrements.windows(2).map(|w| w[1] / w[0]).collect();
    let converged = ratios.iter().all(|&r| r < 1.0);
    Ok(LimitReport {
        t,
        limit: fields[fields.len() - 1].clone(),
        decrements,
        ratios,
        monotone_defect: defect,
        converged,
    })
}

/// Sup distance between the limits built from two sequences, the empirical
/// test of independence from the approximation.
pub fn limit_discrepancy(a: &LimitReport, b: &LimitReport) -> Result<f64> {
    a.limit.sup_distance(&b.limit)
}

/// Smallest metric eigenvalue and its location for a state, recomputed.
pub fn metric_floor(state: &FlowState, config: &FlowConfig) -> Result<(f64, usize)> {
    let m = crate::geometry::metric_matrix_unchecked(&state.phi, config.twist(), state.t)?;
    let v: Vec<f64> = (0..m.len()).map(|i| m.at(i).min_eig()).collect();
    let i = argmin(&v);
    Ok((v[i], i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g1(res: usize) -> TorusGrid {
        TorusGrid::unit(1, res).unwrap()
    }

    #[test]
    fn t_max_examples() {
        let g = g1(8);
        assert_eq!(t_max(&TwistSpec::zero(g)), f64::INFINITY);
        assert_eq!(t_max(&TwistSpec::scalar(g, 0.3)), f64::INFINITY);
        assert_eq!(t_max(&TwistSpec::scalar(g, -0.25)), 4.0);
    }

    #[test]
    fn sign_classes() {
        let g = g1(16);
        assert_eq!(TwistSpec::zero(g).sign_class(), SignClass::Zero);
        assert_eq!(TwistSpec::scalar(g, 0.2).sign_class(), SignClass::Nonneg);
        assert_eq!(TwistSpec::scalar(g, -0.2).sign_class(), SignClass::Nonpos);
        let psi = PotentialField::from_fn(g, |x| 0.01 * (2.0 * PI * x[0]).cos());
        assert_eq!(TwistSpec::new(0.0, psi.clone()).unwrap().sign_class(), SignClass::Mixed);
        // c dominates the Hessian (max |H| = pi^2 / 100)
        assert_eq!(TwistSpec::new(0.2, psi).unwrap().sign_class(), SignClass::Nonneg);
    }

    #[test]
    fn rhs_examples() {
        let g = g1(32);
        let cfg = FlowConfig::new(g);
        let r = rhs(0.3, &PotentialField::zeros(g), &cfg).unwrap();
        assert!(r.values().iter().all(|v| v.abs() < 1e-15));

        let nc = FlowConfig::new(g).with_variant(Variant::Ncmaf);
        let r = rhs(0.0, &PotentialField::constant(g, 0.4), &nc).unwrap();
        assert!(r.values().iter().all(|v| (v - 0.4).abs() < 1e-15));

        let eps = 0.01;
        let phi = PotentialField::from_fn(g, |x| eps * (2.0 * PI * x[0]).cos());
        let r = rhs(0.0, &phi, &cfg).unwrap();
        let lin = phi.map(|v| -PI * PI * v);
        assert!(r.sup_distance(&lin).unwrap() <= PI.powi(4) * eps * eps);
    }

    #[test]
    fn config_validation() {
        let g = g1(8);
        let c = FlowConfig::new(g).with_twist(TwistSpec::scalar(g, -1.0)).with_horizon(0.6);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let c = FlowConfig::new(g).with_variant(Variant::Ncmaf).with_twist(TwistSpec::scalar(g, 0.1));
        assert!(c.validate().is_err());
        assert!(FlowConfig::new(g).with_dt_min(0.0).validate().is_err());
        let h = PotentialField::from_fn(g, |x| 0.3 * (2.0 * PI * x[1]).sin() + 5.0);
        let c = FlowConfig::new(g).with_h(h).unwrap();
        assert!((c.h().map(f64::exp).mean() - 1.0).abs() < 1e-14);
        c.validate().unwrap();
    }

    #[test]
    fn zero_horizon_keeps_only_initial_state() {
        let g = g1(8);
        let traj = run(&PotentialField::zeros(g), &FlowConfig::new(g).with_horizon(0.0)).unwrap();
        assert_eq!(traj.states().len(), 1);
        assert_eq!(traj.series().rows().len(), 1);
    }

    #[test]
    fn ncmaf_zero_is_stationary() {
        let g = g1(16);
        let cfg = FlowConfig::new(g).with_variant(Variant::Ncmaf).with_horizon(0.05);
        let traj = run(&PotentialField::zeros(g), &cfg).unwrap();
        assert!(traj.last().phi.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lands_on_checkpoints() {
        let g = g1(16);
        let cfg = FlowConfig::new(g)
            .with_horizon(0.01)
            .with_checkpoints(vec![0.003, 0.007])
            .with_record_every(1_000_000);
        let phi = PotentialField::from_fn(g, |x| 0.02 * (2.0 * PI * x[0]).sin());
        let traj = run(&phi, &cfg).unwrap();
        assert_eq!(traj.times(), vec![0.0, 0.003, 0.007, 0.01]);
    }

    #[test]
    fn cone_violation_at_start_reports_time() {
        let g = g1(16);
        let phi = PotentialField::from_fn(g, |x| 0.5 * (2.0 * PI * x[0]).cos());
        let err = run(&phi, &FlowConfig::new(g).with_horizon(0.1)).unwrap_err();
        assert!(matches!(err, Error::FlowFailed { t, .. } if t == 0.0));
    }
}
