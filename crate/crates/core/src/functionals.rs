//! Scalar functionals of potentials and densities.
//!
//! Integrals are grid means times the volume, the same quadrature as
//! [`crate::geometry::integrate`]. `dmu = e^h omega^n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowState, TwistSpec};
use crate::geometry::{metric_matrix_unchecked, HermitianField, MetricField};
use crate::grid::PotentialField;
use crate::herm::Herm;

/// `theta_t = (1 + t c) I + t H(psi_chi)` as a field.
pub fn reference_form(twist: &TwistSpec, t: f64, like: &PotentialField) -> Result<HermitianField> {
    let grid = *like.grid();
    twist.psi_chi().grid().check_same(&grid)?;
    let shift = 1.0 + t * twist.c();
    Ok(if twist.has_exact_part() {
        twist.hessian().affine(t, shift)
    } else {
        HermitianField::constant(grid, Herm::scalar(grid.n(), shift))
    })
}

fn energy_parts(phi: &PotentialField, theta: &HermitianField, m: &HermitianField) -> f64 {
    let n = phi.grid().n();
    let v = phi.values();
    let mut acc = 0.0;
    for i in 0..v.len() {
        let (a, b) = (theta.at(i), m.at(i));
        let w = if n == 1 {
            a.trace() + b.trace()
        } else {
            a.det() + a.mixed_det(&b) + b.det()
        };
        acc += v[i] * w;
    }
    acc / (v.len() as f64 * (n + 1) as f64)
}

/// `E(phi) = 1/((n+1)V) sum_j int phi (theta_t + dd^c phi)^j theta_t^{n-j}`,
/// the wedge products written as mixed determinants. Polynomial in `phi`, so
/// defined (though not monotone) off the cone as well.
pub fn energy(phi: &PotentialField, twist: &TwistSpec, t: f64) -> Result<f64> {
    let theta = reference_form(twist, t, phi)?;
    let m = metric_matrix_unchecked(phi, twist, t)?;
    Ok(energy_parts(phi, &theta, &m))
}

/// `I = (1/V) int phi dmu`.
pub fn mean_value(phi: &PotentialField, h: &PotentialField) -> Result<f64> {
    Ok(phi.zip_map(h, |p, h| p * h.exp())?.mean())
}

pub fn sup(phi: &PotentialField) -> f64 {
    phi.max()
}

pub fn inf(phi: &PotentialField) -> f64 {
    phi.min()
}

pub fn oscillation(phi: &PotentialField) -> f64 {
    phi.max() - phi.min()
}

/// `f = det(M_t) e^{-h}`, so that `(theta_t + dd^c phi)^n = f dmu`.
pub fn density(phi: &PotentialField, twist: &TwistSpec, t: f64, h: &PotentialField) -> Result<PotentialField> {
    let m = MetricField::new(metric_matrix_unchecked(phi, twist, t)?)?;
    m.field().det().zip_map(h, |d, h| d * (-h).exp())
}

/// `(int |f|^p dmu)^{1/p}`.
pub fn lp_norm(f: &PotentialField, p: f64, h: &PotentialField) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidConfig(format!("L^p norm needs p >= 1, got {p}")));
    }
    let m = f.zip_map(h, |f, h| f.abs().powf(p) * h.exp())?.mean() * f.grid().volume();
    Ok(m.powf(1.0 / p))
}

/// Built-in Orlicz weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    /// `x^p`, `p > 1`.
    Power(f64),
    /// `x log(1 + x)`.
    XLog1p,
}

impl Weight {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Weight::Power(p) => x.powf(p),
            Weight::XLog1p => x * x.ln_1p(),
        }
    }
}

/// `int w(f) dmu`.
pub fn orlicz_integral(f: &PotentialField, w: Weight, h: &PotentialField) -> Result<f64> {
    Ok(f.zip_map(h, |f, h| w.eval(f) * h.exp())?.mean() * f.grid().volume())
}

/// One line of the functional time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub sup: f64,
    pub inf: f64,
    pub osc: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub fmin: f64,
    pub fmax: f64,
    pub f_l2: f64,
    pub orlicz_xlogx: f64,
    pub vol: f64,
    pub min_eig: f64,
    pub dt: f64,
}

pub const SERIES_COLUMNS: [&str; 13] =
    ["t", "sup", "inf", "osc", "I", "E", "fmin", "fmax", "f_l2", "orlicz_xlogx", "vol", "min_eig", "dt"];

impl SeriesRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "t" => self.t,
            "sup" => self.sup,
            "inf" => self.inf,
            "osc" => self.osc,
            "I" => self.i,
            "E" => self.e,
            "fmin" => self.fmin,
            "fmax" => self.fmax,
            "f_l2" => self.f_l2,
            "orlicz_xlogx" => self.orlicz_xlogx,
            "vol" => self.vol,
            "min_eig" => self.min_eig,
            "dt" => self.dt,
            _ => return None,
        })
    }
}

/// Functionals of a flow state.
pub fn series_row(state: &FlowState, config: &FlowConfig) -> Result<SeriesRow> {
    let phi = &state.phi;
    let twist = config.twist();
    let h = config.h();
    let t = state.t;
    let m = metric_matrix_unchecked(phi, twist, t)?;
    let theta = reference_form(twist, t, phi)?;
    let det = m.det();
    let f = det.zip_map(h, |d, h| d * (-h).exp())?;
    let (min_eig, _) = m.eigen_range();
    Ok(SeriesRow {
        t,
        sup: sup(phi),
        inf: inf(phi),
        osc: oscillation(phi),
        i: mean_value(phi, h)?,
        e: energy_parts(phi, &theta, &m),
        fmin: f.min(),
        fmax: f.max(),
        f_l2: lp_norm(&f, 2.0, h)?,
        orlicz_xlogx: orlicz_integral(&f, Weight::XLog1p, h)?,
        vol: crate::geometry::integrate(&det),
        min_eig,
        dt: state.dt,
    })
}

/// Time series of [`SeriesRow`]s with strictly increasing times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FunctionalSeries {
    rows: Vec<SeriesRow>,
}

impl FunctionalSeries {
    pub fn from_rows(rows: Vec<SeriesRow>) -> Result<Self> {
        let mut s = Self::default();
        for r in rows {
            s.try_push(r)?;
        }
        Ok(s)
    }

    pub(crate) fn push(&mut self, row: SeriesRow) {
        self.try_push(row).expect("series times increase");
    }

    pub fn try_push(&mut self, row: SeriesRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::InvalidConfig(format!(
                    "series time {} does not exceed {}",
                    row.t, last.t
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[SeriesRow] {
        &self.rows
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.get(name)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|r| SERIES_COLUMNS.iter().all(|c| r.get(c).is_some_and(f64::is_finite)))
    }
}
