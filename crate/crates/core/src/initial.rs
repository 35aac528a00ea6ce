//! Singular initial potentials, their decreasing smooth approximations, and
//! numerical Lelong numbers and integrability thresholds.
//!
//! Model singularities are built from the periodized Green function
//! `G(z) = log|theta_1(pi z / L, e^{-pi})| - pi y^2 / L^2 - log(pi theta_1'(0) / L)`
//! of the square torus of side `L`. It satisfies `G(z) = log|z| + O(|z|^2)` and
//! `H(G) = (pi/2) delta - pi / (2 L^2)`, so `gamma G` is omega-psh exactly
//! when `gamma < 2 L^2 / pi`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::complex_hessian;
use crate::grid::{PotentialField, TorusGrid, TorusPoint};
use crate::spectral::spectral;

/// Regularity class of initial data, used to gate the verifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataClass {
    Smooth,
    Bounded,
    Lelong,
    ZeroLelong,
    FiniteEnergy,
}

impl DataClass {
    pub fn is_bounded(&self) -> bool {
        matches!(self, DataClass::Smooth | DataClass::Bounded)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DataClass::Smooth => "smooth",
            DataClass::Bounded => "bounded",
            DataClass::Lelong => "lelong",
            DataClass::ZeroLelong => "zero_lelong",
            DataClass::FiniteEnergy => "finite_energy",
        }
    }
}

/// `amp * cos(2 pi k.x / L + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amp: f64,
    pub k: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

impl Mode {
    pub fn new(amp: f64, k: Vec<i32>, phase: f64) -> Self {
        Self { amp, k, phase }
    }

    fn eval(&self, x: &[f64], period: f64) -> f64 {
        let dot: f64 = self.k.iter().zip(x).map(|(&k, &x)| k as f64 * x).sum();
        self.amp * (2.0 * PI * dot / period + self.phase).cos()
    }
}

fn default_amp() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialKind {
    /// Finite sum of Fourier modes.
    Smooth { modes: Vec<Mode> },
    /// `gamma G(z - z0)`, Lelong number `gamma` at `z0`.
    Lelong {
        gamma: f64,
        #[serde(default)]
        z0: Option<TorusPoint>,
    },
    /// `-amp ((c - G)^a - 1)` with `c - G >= 1`: unbounded, zero Lelong number.
    ZeroLelong {
        a: f64,
        #[serde(default = "default_amp")]
        amp: f64,
        #[serde(default)]
        z0: Option<TorusPoint>,
    },
    /// Bounded data `max(-floor + sum modes, gamma G(z - z0))`, whose
    /// gradient jumps across the contact set.
    BoundedDiscontinuous {
        gamma: f64,
        floor: f64,
        #[serde(default)]
        modes: Vec<Mode>,
        #[serde(default)]
        z0: Option<TorusPoint>,
    },
    /// The zero-Lelong profile with tail exponent `a < 1/2` (finite energy).
    FiniteEnergy {
        a: f64,
        #[serde(default = "default_amp")]
        amp: f64,
        #[serde(default)]
        z0: Option<TorusPoint>,
    },
    /// A field snapshot.
    FromFile {
        path: PathBuf,
        #[serde(default = "default_file_class")]
        class: DataClass,
    },
}

fn default_file_class() -> DataClass {
    DataClass::Bounded
}

fn default_clip() -> f64 {
    -1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub kind: PotentialKind,
    /// Sampled values are clipped from below at this level.
    #[serde(default = "default_clip")]
    pub clip_floor: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind) -> Self {
        Self { kind, clip_floor: default_clip() }
    }

    pub fn smooth(modes: Vec<Mode>) -> Self {
        Self::new(PotentialKind::Smooth { modes })
    }

    pub fn lelong(gamma: f64) -> Self {
        Self::new(PotentialKind::Lelong { gamma, z0: None })
    }

    pub fn zero_lelong(a: f64) -> Self {
        Self::new(PotentialKind::ZeroLelong { a, amp: 1.0, z0: None })
    }

    pub fn data_class(&self) -> DataClass {
        match &self.kind {
            PotentialKind::Smooth { .. } => DataClass::Smooth,
            PotentialKind::Lelong { gamma, .. } if *gamma == 0.0 => DataClass::Smooth,
            PotentialKind::Lelong { .. } => DataClass::Lelong,
            PotentialKind::ZeroLelong { .. } => DataClass::ZeroLelong,
            PotentialKind::BoundedDiscontinuous { .. } => DataClass::Bounded,
            PotentialKind::FiniteEnergy { .. } => DataClass::FiniteEnergy,
            PotentialKind::FromFile { class, .. } => *class,
        }
    }

    /// Singular point, defaulting to the cell centre next to the middle of
    /// the torus.
    pub fn singular_point(&self, grid: &TorusGrid) -> Option<TorusPoint> {
        let z0 = match &self.kind {
            PotentialKind::Lelong { z0, .. }
            | PotentialKind::ZeroLelong { z0, .. }
            | PotentialKind::BoundedDiscontinuous { z0, .. }
            | PotentialKind::FiniteEnergy { z0, .. } => z0,
            _ => return None,
        };
        Some(z0.clone().unwrap_or_else(|| default_point(grid)))
    }
}

/// Default singular point: half a cell off the centre node.
pub fn default_point(grid: &TorusGrid) -> TorusPoint {
    TorusPoint::off_node(grid, &vec![0.5 * grid.period(); grid.dims()])
}

const THETA_TERMS: usize = 8;

fn theta1(u: Complex64) -> Complex64 {
    let q = (-PI).exp();
    let mut p = Complex64::new(2.0 * q.powf(0.25), 0.0) * u.sin();
    let c2 = (u * 2.0).cos();
    for k in 1..=THETA_TERMS {
        let q2k = q.powi(2 * k as i32);
        p *= (1.0 - q2k) * (Complex64::new(1.0 + q2k * q2k, 0.0) - c2 * (2.0 * q2k));
    }
    p
}

fn theta1_prime0() -> f64 {
    let q = (-PI).exp();
    let mut p = 2.0 * q.powf(0.25);
    for k in 1..=THETA_TERMS {
        p *= (1.0 - q.powi(2 * k as i32)).powi(3);
    }
    p
}

/// Periodized Green function of the square torus of side `period`, at the
/// displacement `(dx, dy)`; `log|z|` to second order near 0.
pub fn green(period: f64, dx: f64, dy: f64) -> f64 {
    let wrap = |d: f64| d - period * (d / period + 0.5).floor();
    let (x, y) = (wrap(dx), wrap(dy));
    if x == 0.0 && y == 0.0 {
        return f64::NEG_INFINITY;
    }
    let u = Complex64::new(PI * x / period, PI * y / period);
    theta1(u).norm().ln() - PI * y * y / (period * period) - (PI * theta1_prime0() / period).ln()
}

/// Log-distance model at a gridpoint: `G` for `n = 1`, and
/// `(1/2) log(e^{2 G(z1 - a1)} + e^{2 G(z2 - a2)})` for `n = 2`.
fn log_model(grid: &TorusGrid, x: &[f64], z0: &TorusPoint) -> f64 {
    let l = grid.period();
    let g1 = green(l, x[0] - z0.coord(0), x[1] - z0.coord(1));
    if grid.n() == 1 {
        return g1;
    }
    let g2 = green(l, x[2] - z0.coord(2), x[3] - z0.coord(3));
    let m = g1.max(g2);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + 0.5 * ((2.0 * (g1 - m)).exp() + (2.0 * (g2 - m)).exp()).ln()
}

/// `gamma * log|z - z0|`, periodized.
pub fn log_potential(grid: &TorusGrid, z0: &TorusPoint, gamma: f64) -> PotentialField {
    PotentialField::from_fn(*grid, |x| gamma * log_model(grid, x, z0))
}

fn psh_bound(grid: &TorusGrid) -> f64 {
    2.0 * grid.period() * grid.period() / PI
}

fn check_point(z0: &Option<TorusPoint>, grid: &TorusGrid) -> Result<()> {
    if let Some(p) = z0 {
        p.check_dims(grid)?;
    }
    Ok(())
}

fn check_modes(modes: &[Mode], grid: &TorusGrid) -> Result<()> {
    for m in modes {
        if m.k.len() != grid.dims() {
            return Err(Error::InvalidSpec(format!(
                "mode {:?} has {} wavenumbers, grid has {} axes",
                m.k,
                m.k.len(),
                grid.dims()
            )));
        }
        if !(m.amp.is_finite() && m.phase.is_finite()) {
            return Err(Error::InvalidSpec("mode amplitude and phase must be finite".into()));
        }
    }
    Ok(())
}

fn zero_lelong_profile(grid: &TorusGrid, z0: &TorusPoint, a: f64, amp: f64) -> PotentialField {
    let g = PotentialField::from_fn(*grid, |x| log_model(grid, x, z0));
    let c = 1.0 + g.values().iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    g.map(|v| -amp * ((c - v).powf(a) - 1.0))
}

fn validate(spec: &PotentialSpec, grid: &TorusGrid) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidSpec(m));
    let bound = psh_bound(grid);
    match &spec.kind {
        PotentialKind::Smooth { modes } => check_modes(modes, grid)?,
        PotentialKind::Lelong { gamma, z0 } => {
            check_point(z0, grid)?;
            if !(*gamma >= 0.0) {
                return bad(format!("Lelong mass must be >= 0, got {gamma}"));
            }
            if *gamma >= bound {
                return bad(format!("gamma = {gamma} is not omega-psh here (needs < {bound:.4})"));
            }
        }
        PotentialKind::ZeroLelong { a, amp, z0 } | PotentialKind::FiniteEnergy { a, amp, z0 } => {
            check_point(z0, grid)?;
            let top = if matches!(spec.kind, PotentialKind::FiniteEnergy { .. }) { 0.5 } else { 1.0 };
            if !(*a > 0.0 && *a < top) {
                return bad(format!("exponent a = {a} must lie in (0, {top})"));
            }
            if !(*amp > 0.0) || amp * a >= bound {
                return bad(format!("amp * a = {} must lie in (0, {bound:.4})", amp * a));
            }
        }
        PotentialKind::BoundedDiscontinuous { gamma, floor, modes, z0 } => {
            check_point(z0, grid)?;
            check_modes(modes, grid)?;
            if !(*gamma > 0.0 && *gamma < bound) {
                return bad(format!("gamma = {gamma} must lie in (0, {bound:.4})"));
            }
            if !(floor.is_finite() && *floor >= 0.0) {
                return bad(format!("floor must be finite and >= 0, got {floor}"));
            }
        }
        PotentialKind::FromFile { .. } => {}
    }
    if !(spec.clip_floor.is_finite()) {
        return bad("clip_floor must be finite".into());
    }
    Ok(())
}

/// Sample the model potential of `spec` on `grid`.
pub fn sample_potential(spec: &PotentialSpec, grid: &TorusGrid) -> Result<PotentialField> {
    validate(spec, grid)?;
    let l = grid.period();
    let z = || spec.singular_point(grid).expect("singular kind");
    let raw = match &spec.kind {
        PotentialKind::Smooth { modes } => {
            PotentialField::from_fn(*grid, |x| modes.iter().map(|m| m.eval(x, l)).sum())
        }
        PotentialKind::Lelong { gamma, .. } => {
            if *gamma == 0.0 {
                PotentialField::zeros(*grid)
            } else {
                log_potential(grid, &z(), *gamma)
            }
        }
        PotentialKind::ZeroLelong { a, amp, .. } | PotentialKind::FiniteEnergy { a, amp, .. } => {
            zero_lelong_profile(grid, &z(), *a, *amp)
        }
        PotentialKind::BoundedDiscontinuous { gamma, floor, modes, .. } => {
            let z0 = z();
            PotentialField::from_fn(*grid, |x| {
                let base = -floor + modes.iter().map(|m| m.eval(x, l)).sum::<f64>();
                base.max(gamma * log_model(grid, x, &z0))
            })
        }
        PotentialKind::FromFile { path, .. } => {
            let snap = crate::io::read_snapshot(path)?;
            grid.check_same(snap.field.grid())?;
            snap.field
        }
    };
    let clip = spec.clip_floor;
    let phi = raw.map(|v| if v.is_nan() || v < clip { clip } else { v });
    // omega-psh up to tolerance after grid-scale mollification
    let probe = match spec.data_class() {
        DataClass::Smooth => phi.clone(),
        _ => mollify(&phi, 2.0 * grid.spacing()),
    };
    let lo = complex_hessian(&probe).eigen_range().0 + 1.0;
    if lo < -1e-6 {
        return Err(Error::InvalidSpec(format!(
            "sampled potential is not omega-psh (min eigenvalue {lo:.3e})"
        )));
    }
    Ok(phi)
}

/// Gaussian smoothing at radius `delta`: the multiplier `exp(-delta^2 |k|^2 / 2)`.
pub fn mollify(phi: &PotentialField, delta: f64) -> PotentialField {
    let s = spectral(phi.grid());
    let d2 = 0.5 * delta * delta;
    let v = s.apply_symbol(phi.values(), |k| (-d2 * k.iter().map(|x| x * x).sum::<f64>()).exp());
    PotentialField::from_values(*phi.grid(), v).expect("same grid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxParams {
    /// Level `j` truncates at `-j * cut_step`.
    #[serde(default = "default_cut")]
    pub cut_step: f64,
    /// Mollification radius of level 1; default makes the last radius
    /// two grid cells.
    #[serde(default)]
    pub delta_first: Option<f64>,
    /// `delta_{j+1} = ratio * delta_j`.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Largest admissible compensating constant.
    #[serde(default = "default_cmax")]
    pub max_compensation: f64,
}

fn default_cut() -> f64 {
    1.0
}
fn default_ratio() -> f64 {
    FRAC_1_SQRT_2
}
fn default_cmax() -> f64 {
    100.0
}

impl Default for ApproxParams {
    fn default() -> Self {
        Self { cut_step: default_cut(), delta_first: None, ratio: default_ratio(), max_compensation: default_cmax() }
    }
}

#[derive(Debug, Clone)]
pub struct Level {
    pub j: usize,
    pub phi: PotentialField,
    pub delta: f64,
    /// Smallest eigenvalue of `I + H(phi)`.
    pub min_eig: f64,
}

#[derive(Debug, Clone)]
pub struct ApproximationSequence {
    spec: PotentialSpec,
    phi0: PotentialField,
    levels: Vec<Level>,
    compensation: f64,
}

impl ApproximationSequence {
    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    /// The sampled (clipped) data being approximated.
    pub fn phi0(&self) -> &PotentialField {
        &self.phi0
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, j: usize) -> Option<&Level> {
        self.levels.iter().find(|l| l.j == j)
    }

    /// The constant `C` in `+ C delta_j^2`.
    pub fn compensation(&self) -> f64 {
        self.compensation
    }
}

pub fn approximation_sequence(
    spec: &PotentialSpec,
    grid: &TorusGrid,
    count: usize,
) -> Result<ApproximationSequence> {
    approximation_sequence_with(spec, grid, count, &ApproxParams::default())
}

/// Level `j` is `S_{delta_j}[max(phi0, -j K)] + C delta_j^2` where `S` is
/// Gaussian smoothing. Since `(1/4) Laplacian(phi0) >= -n`, `C = 2n`
/// suffices in exact arithmetic; larger `C` is taken if the discrete levels
/// need it.
pub fn approximation_sequence_with(
    spec: &PotentialSpec,
    grid: &TorusGrid,
    count: usize,
    params: &ApproxParams,
) -> Result<ApproximationSequence> {
    if count == 0 {
        return Err(Error::InvalidSpec("need at least one approximation level".into()));
    }
    if !(params.cut_step > 0.0 && params.ratio > 0.0 && params.ratio < 1.0) {
        return Err(Error::InvalidSpec("cut_step must be > 0 and ratio in (0, 1)".into()));
    }
    let phi0 = sample_potential(spec, grid)?;
    let h = grid.spacing();
    let d1 = params
        .delta_first
        .unwrap_or(2.0 * h * params.ratio.powi(-(count as i32 - 1)));
    if !(d1 > 0.0) {
        return Err(Error::InvalidSpec(format!("delta_first must be > 0, got {d1}")));
    }
    let deltas: Vec<f64> = (0..count).map(|i| d1 * params.ratio.powi(i as i32)).collect();
    let smooth = spec.data_class() == DataClass::Smooth;
    let raw: Vec<PotentialField> = deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if smooth {
                phi0.clone()
            } else {
                let cut = -((i + 1) as f64) * params.cut_step;
                mollify(&phi0.map(|v| v.max(cut)), d)
            }
        })
        .collect();
    let n = grid.n() as f64;
    let mut c = 2.0 * n;
    for i in 0..count.saturating_sub(1) {
        let excess = raw[i + 1].zip_map(&raw[i], |a, b| a - b)?.max();
        let gap = deltas[i] * deltas[i] - deltas[i + 1] * deltas[i + 1];
        let need = (excess + 1e-12) / gap;
        if need > params.max_compensation {
            return Err(Error::MonotonicityFailure { level: i + 1, next: i + 2, excess });
        }
        c = c.max(need);
    }
    let mut levels = Vec::with_capacity(count);
    for (i, (r, &d)) in raw.into_iter().zip(&deltas).enumerate() {
        let phi = r.add_constant(c * d * d);
        let min_eig = complex_hessian(&phi).eigen_range().0 + 1.0;
        if !(min_eig > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "level {} is not strictly omega-psh (min eigenvalue {min_eig:.3e})",
                i + 1
            )));
        }
        levels.push(Level { j: i + 1, phi, delta: d, min_eig });
    }
    for w in levels.windows(2) {
        let excess = w[1].phi.zip_map(&w[0].phi, |a, b| a - b)?.max();
        if excess > 1e-12 {
            return Err(Error::MonotonicityFailure { level: w[0].j, next: w[1].j, excess });
        }
    }
    Ok(ApproximationSequence { spec: spec.clone(), phi0, levels, compensation: c })
}

/// Lelong number at `z0` by regression of shell averages against `log r`
/// over radii from two cells to `min(8 cells, L/8)`.
pub fn lelong_estimate(phi: &PotentialField, z0: &TorusPoint) -> Result<f64> {
    let g = phi.grid();
    let h = g.spacing();
    lelong_estimate_window(phi, z0, 2.0 * h, (8.0 * h).min(g.period() / 8.0))
}

const SHELLS: usize = 8;

/// Slope of shell means of `phi` against shell means of `log r` on
/// `[r_min, r_max)`, with a quadratic term in `r` (the spherical mean of a
/// smooth function) when enough shells are populated. Clamped at 0.
pub fn lelong_estimate_window(phi: &PotentialField, z0: &TorusPoint, r_min: f64, r_max: f64) -> Result<f64> {
    let g = phi.grid();
    z0.check_dims(g)?;
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(Error::InsufficientResolution(format!("empty radius window [{r_min}, {r_max})")));
    }
    let q = (r_max / r_min).ln() / SHELLS as f64;
    let mut acc = [[0.0f64; 4]; SHELLS]; // count, sum phi, sum log r, sum r^2
    for i in 0..g.len() {
        let r = g.distance_to(i, z0);
        if r < r_min || r >= r_max {
            continue;
        }
        let k = (((r / r_min).ln() / q) as usize).min(SHELLS - 1);
        let a = &mut acc[k];
        a[0] += 1.0;
        a[1] += phi.values()[i];
        a[2] += r.ln();
        a[3] += r * r;
    }
    let rows: Vec<[f64; 3]> = acc
        .iter()
        .filter(|a| a[0] > 0.0)
        .map(|a| [a[1] / a[0], a[2] / a[0], a[3] / a[0]])
        .collect();
    if rows.len() < 3 {
        return Err(Error::InsufficientResolution(format!(
            "only {} populated radii in [{r_min:.3e}, {r_max:.3e})",
            rows.len()
        )));
    }
    let quad = rows.len() >= 5;
    let m = if quad { 3 } else { 2 };
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for r in &rows {
        let basis = [1.0, r[1], r[2]];
        for p in 0..m {
            atb[p] += basis[p] * r[0];
            for s in 0..m {
                ata[p][s] += basis[p] * basis[s];
            }
        }
    }
    let coef = solve_small(ata, atb, m)
        .ok_or_else(|| Error::InsufficientResolution("degenerate radius window".into()))?;
    Ok(coef[1].max(0.0))
}

fn solve_small(mut a: [[f64; 3]; 3], mut b: [f64; 3], m: usize) -> Option<[f64; 3]> {
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Whether `int e^{-2 beta phi0}` converges, judged by the quadrature
/// increments on the grid and its two refinements: convergent iff the
/// increments shrink.
pub fn integrable_at(spec: &PotentialSpec, grid: &TorusGrid, beta: f64) -> Result<bool> {
    let q = refinement_integrals(spec, grid, beta)?;
    let (d1, d2) = ((q[1] - q[0]).abs(), (q[2] - q[1]).abs());
    Ok(d1 <= 1e-12 * q[2].abs() || d2 < d1)
}

fn refinement_integrals(spec: &PotentialSpec, grid: &TorusGrid, beta: f64) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let g = TorusGrid::new(grid.n(), grid.res() << k, grid.period())?;
        let phi = sample_potential(spec, &g)?;
        *o = phi.map(|v| (-2.0 * beta * v).exp()).mean() * g.volume();
    }
    Ok(out)
}

/// Largest `beta` with `int e^{-2 beta phi0}` finite, by bisection to
/// relative accuracy `rel`. Infinite when no divergence is found up to
/// `beta = 1024`.
pub fn integrability_threshold(spec: &PotentialSpec, grid: &TorusGrid, rel: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while integrable_at(spec, grid, hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1024.0 {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > rel * hi {
        let mid = 0.5 * (lo + hi);
        if integrable_at(spec, grid, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
