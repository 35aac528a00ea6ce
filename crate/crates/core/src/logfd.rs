//! Density form of the one-dimensional flow: logarithmic fast diffusion.
//!
//! For `n = 1`, `h = 0` and no twist, `f = 1 + H(phi)` obeys
//! `df/dt = H(log f) = (1/4) Laplacian(log f)`. This module integrates
//! `df/dtau = Laplacian(log f)` in its own time `tau = t / 4`
//! ([`TIME_SCALE`]), and converts between densities and mean-zero potentials.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ma_ratio;
use crate::flow::TwistSpec;
use crate::grid::PotentialField;
use crate::spectral::{spectral, Spectral};

/// `tau = TIME_SCALE * t`.
pub const TIME_SCALE: f64 = 0.25;

const MASS_TOL: f64 = 1e-10;
const MAX_HALVINGS: u32 = 30;

/// A positive density on an `n = 1` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField(PotentialField);

impl DensityField {
    pub fn new(f: PotentialField) -> Result<Self> {
        if f.grid().n() != 1 {
            return Err(Error::InvalidGrid("densities live on n = 1 grids".into()));
        }
        let m = f.min();
        if !(m > 0.0) || !f.is_finite() {
            return Err(Error::PositivityLoss { min: m });
        }
        Ok(Self(f))
    }

    pub fn field(&self) -> &PotentialField {
        &self.0
    }

    pub fn into_field(self) -> PotentialField {
        self.0
    }

    /// `int f omega`.
    pub fn mass(&self) -> f64 {
        crate::geometry::integrate(&self.0)
    }

    pub fn min(&self) -> f64 {
        self.0.min()
    }

    pub fn max(&self) -> f64 {
        self.0.max()
    }
}

/// `f = det(I + H(phi))`.
pub fn potential_to_density(phi: &PotentialField) -> Result<DensityField> {
    let f = ma_ratio(phi, &TwistSpec::zero(*phi.grid()), 0.0)?;
    DensityField::new(f)
}

/// The mean-zero `phi` with `1 + H(phi) = f`; requires `int f = V`.
pub fn density_to_potential(f: &DensityField) -> Result<PotentialField> {
    let g = *f.field().grid();
    let mass = f.mass();
    let v = g.volume();
    if ((mass - v) / v).abs() > MASS_TOL {
        return Err(Error::MassMismatch { mass, expected: v });
    }
    let s = spectral(&g);
    let vals = s.apply_symbol(&f.field().values().iter().map(|x| x - 1.0).collect::<Vec<_>>(), |k| {
        let k2 = k[0] * k[0] + k[1] * k[1];
        if k2 == 0.0 {
            0.0
        } else {
            -4.0 / k2
        }
    });
    PotentialField::from_values(g, vals)
}

fn laplacian_log(s: &Spectral, f: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = f.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::PositivityLoss { min: f[i] });
    }
    let logf: Vec<f64> = f.iter().map(|x| x.ln()).collect();
    Ok(s.apply_symbol(&logf, |k| -(k[0] * k[0] + k[1] * k[1])))
}

fn rk4(s: &Spectral, f: &[f64], dt: f64) -> Result<Vec<f64>> {
    let stage = |k: &[f64], a: f64| -> Vec<f64> { f.iter().zip(k).map(|(f, k)| f + a * k).collect() };
    let k1 = laplacian_log(s, f)?;
    let k2 = laplacian_log(s, &stage(&k1, 0.5 * dt))?;
    let k3 = laplacian_log(s, &stage(&k2, 0.5 * dt))?;
    let k4 = laplacian_log(s, &stage(&k3, dt))?;
    let out: Vec<f64> = (0..f.len())
        .map(|i| f[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if let Some(i) = out.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::PositivityLoss { min: out[i] });
    }
    Ok(out)
}

fn advance(s: &Spectral, f: Vec<f64>, dt: f64, depth: u32) -> Result<Vec<f64>> {
    match rk4(s, &f, dt) {
        Ok(v) => Ok(v),
        Err(Error::PositivityLoss { min }) => {
            if depth >= MAX_HALVINGS {
                return Err(Error::PositivityLoss { min });
            }
            let mid = advance(s, f, 0.5 * dt, depth + 1)?;
            advance(s, mid, 0.5 * dt, depth + 1)
        }
        Err(e) => Err(e),
    }
}

/// Advance by exactly `dtau`, splitting the step while a stage loses
/// positivity.
pub fn step_logfd(f: &DensityField, dtau: f64) -> Result<DensityField> {
    let s = spectral(f.field().grid());
    let v = advance(&s, f.field().values().to_vec(), dtau, 0)?;
    DensityField::new(PotentialField::from_values(*f.field().grid(), v)?)
}

/// Explicit step bound `safety * h^2 * min f / 16`.
pub fn stable_dt(f: &DensityField, safety: f64) -> f64 {
    let h = f.field().grid().spacing();
    safety * h * h * f.min() / 16.0
}

/// Integrate to each of the increasing times `taus`, returning the density
/// at each.
pub fn evolve(f0: &DensityField, taus: &[f64], safety: f64) -> Result<Vec<DensityField>> {
    let s: Arc<Spectral> = spectral(f0.field().grid());
    let grid = *f0.field().grid();
    let mut cur = f0.clone();
    let mut tau = 0.0;
    let mut out = Vec::with_capacity(taus.len());
    for &target in taus {
        if target < tau {
            return Err(Error::InvalidConfig("evolve times must increase".into()));
        }
        while tau < target {
            let dt = stable_dt(&cur, safety).min(target - tau);
            let v = advance(&s, cur.field().values().to_vec(), dt, 0)?;
            cur = DensityField::new(PotentialField::from_values(grid, v)?)?;
            tau = if target - tau <= dt { target } else { tau + dt };
        }
        out.push(cur.clone());
    }
    Ok(out)
}
