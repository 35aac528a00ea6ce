//! Damped Newton solver for `alpha^n det M_t(u) = e^{alpha u + g + h}`.
//!
//! The residual is taken in log form,
//! `F(u) = n log alpha + log det M_t(u) - alpha u - g - h`, with linearization
//! `L delta = tr_{M_t(u)}(dd^c delta) - alpha delta`. `L` is not symmetric in
//! the grid inner product, so the inner solve is restarted GMRES, right
//! preconditioned by the flat operator `kappa tr H - alpha` inverted
//! spectrally.
//!
//! For `alpha = 0` the solution is normalized to mean zero and an unknown
//! constant `c` is carried in `log det M_t(u) = g + h + c`; compatible data
//! give `c = 0`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::TwistSpec;
use crate::geometry::{hessian_parts, metric_matrix_unchecked, HermitianField};
use crate::grid::PotentialField;
use crate::spectral::{spectral, Spectral};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target sup-norm of the residual.
    pub tol: f64,
    pub max_newton: usize,
    pub warm_start: Option<PotentialField>,
    pub gmres_restart: usize,
    pub gmres_max: usize,
    /// Relative tolerance of each inner solve.
    pub gmres_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_newton: 60, warm_start: None, gmres_restart: 40, gmres_max: 400, gmres_tol: 1e-10 }
    }
}

/// One Newton iteration of the solver log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonLogRow {
    pub iteration: usize,
    pub residual: f64,
    pub damping: f64,
    pub gmres_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: PotentialField,
    /// Sup norm of the final residual.
    pub residual: f64,
    /// The constant `c` (always 0 for `alpha > 0`).
    pub constant: f64,
    pub log: Vec<NewtonLogRow>,
}

/// Application of the Newton linearization at a fixed `u`.
pub struct Linearization {
    metric: HermitianField,
    alpha: f64,
    spec: Arc<Spectral>,
}

impl Linearization {
    pub fn metric(&self) -> &HermitianField {
        &self.metric
    }

    /// `tr_M(dd^c delta) - alpha delta`.
    pub fn apply(&self, delta: &PotentialField) -> Result<PotentialField> {
        let v = self.apply_raw(delta.values())?;
        PotentialField::from_values(*delta.grid(), v)
    }

    fn apply_raw(&self, delta: &[f64]) -> Result<Vec<f64>> {
        let grid = *self.metric.grid();
        let (a, d, b) = hessian_parts(&self.spec, delta);
        let hd = HermitianField::from_parts(grid, a, d, b);
        let mut out = Vec::with_capacity(delta.len());
        for i in 0..delta.len() {
            let m = self.metric.at(i);
            let tr = m
                .trace_inv_times(&hd.at(i))
                .ok_or(Error::SingularMetric { det: m.det(), index: i })?;
            out.push(tr - self.alpha * delta[i]);
        }
        Ok(out)
    }
}

fn residual_raw(
    u: &PotentialField,
    alpha: f64,
    g: &PotentialField,
    h: &PotentialField,
    twist: &TwistSpec,
    t: f64,
) -> Result<(Vec<f64>, HermitianField)> {
    let m = metric_matrix_unchecked(u, twist, t)?;
    let n = u.grid().n() as f64;
    let base = if alpha > 0.0 { n * alpha.ln() } else { 0.0 };
    let mut out = Vec::with_capacity(u.values().len());
    for i in 0..u.values().len() {
        let mi = m.at(i);
        if !(mi.min_eig() > 0.0) {
            return Err(Error::KaehlerConeViolation { min_eig: mi.min_eig(), index: i });
        }
        out.push(base + mi.det().ln() - alpha * u.values()[i] - g.values()[i] - h.values()[i]);
    }
    Ok((out, m))
}

/// Residual field and the linearization at `u`.
pub fn newton_residual_and_linearization(
    u: &PotentialField,
    alpha: f64,
    g: &PotentialField,
    h: &PotentialField,
    twist: &TwistSpec,
    t: f64,
) -> Result<(PotentialField, Linearization)> {
    let grid = *u.grid();
    grid.check_same(g.grid())?;
    grid.check_same(h.grid())?;
    let (r, m) = residual_raw(u, alpha, g, h, twist, t)?;
    let lin = Linearization { metric: m, alpha, spec: spectral(&grid) };
    Ok((PotentialField::from_values(grid, r)?, lin))
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Flat preconditioner `(kappa tr H - alpha)^{-1}`; the constant mode is
/// dropped when `alpha = 0`.
struct Precond {
    spec: Arc<Spectral>,
    symbol: Vec<f64>,
}

impl Precond {
    fn new(lin: &Linearization) -> Self {
        let grid = *lin.metric.grid();
        let spec = lin.spec.clone();
        let n = grid.n() as f64;
        let len = lin.metric.len();
        let kappa = (0..len)
            .map(|i| lin.metric.at(i).inverse().map(|m| m.trace()).unwrap_or(1.0))
            .sum::<f64>()
            / (n * len as f64);
        let symbol = (0..len)
            .map(|i| {
                let k = spec.wavevector(i);
                let s = -0.25 * kappa * k.iter().map(|x| x * x).sum::<f64>() * spec.mask(i) - lin.alpha;
                if s == 0.0 {
                    0.0
                } else {
                    1.0 / s
                }
            })
            .collect();
        Self { spec, symbol }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.spec.forward(v);
        for (c, s) in w.iter_mut().zip(&self.symbol) {
            *c *= *s;
        }
        self.spec.inverse_real(w)
    }
}

/// Right-preconditioned restarted GMRES for `L x = b`. Returns `x` and the
/// number of inner iterations.
fn gmres(lin: &Linearization, pre: &Precond, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, usize)> {
    let len = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; len];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let target = opts.gmres_tol * bnorm;
    let m = opts.gmres_restart.max(1);
    let mut total = 0;
    loop {
        let ax = lin.apply_raw(&pre.apply(&x))?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta <= target || total >= opts.gmres_max {
            return Ok((pre.apply(&x), total));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut hmat = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut e = vec![0.0; m + 1];
        e[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            let mut w = lin.apply_raw(&pre.apply(&v[k]))?;
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot(&w, vj);
                hmat[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vi;
                }
            }
            let hn = norm2(&w);
            hmat[k + 1][k] = hn;
            for j in 0..k {
                let tmp = cs[j] * hmat[j][k] + sn[j] * hmat[j + 1][k];
                hmat[j + 1][k] = -sn[j] * hmat[j][k] + cs[j] * hmat[j + 1][k];
                hmat[j][k] = tmp;
            }
            let den = (hmat[k][k] * hmat[k][k] + hmat[k + 1][k] * hmat[k + 1][k]).sqrt();
            if den == 0.0 {
                break;
            }
            cs[k] = hmat[k][k] / den;
            sn[k] = hmat[k + 1][k] / den;
            hmat[k][k] = den;
            hmat[k + 1][k] = 0.0;
            e[k + 1] = -sn[k] * e[k];
            e[k] *= cs[k];
            k_used = k + 1;
            if e[k + 1].abs() <= target || hn == 0.0 || total >= opts.gmres_max {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hmat[i][j] * y[j]).sum();
            y[i] = (e[i] - s) / hmat[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vi;
            }
        }
        if k_used == 0 {
            return Ok((pre.apply(&x), total));
        }
    }
}

/// Solve with default options; returns `u`.
pub fn solve_ma(
    alpha: f64,
    g: &PotentialField,
    h: &PotentialField,
    twist: &TwistSpec,
    t: f64,
) -> Result<PotentialField> {
    Ok(solve_ma_with(alpha, g, h, twist, t, &SolveOptions::default())?.u)
}

pub fn solve_ma_with(
    alpha: f64,
    g: &PotentialField,
    h: &PotentialField,
    twist: &TwistSpec,
    t: f64,
    opts: &SolveOptions,
) -> Result<Solution> {
    let grid = *g.grid();
    grid.check_same(h.grid())?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {alpha}")));
    }
    let n = grid.n() as i32;
    let degenerate = alpha == 0.0;
    if degenerate {
        let mass = g.zip_map(h, |g, h| (g + h).exp())?.mean() * grid.volume();
        let expected = (1.0 + t * twist.c()).powi(n) * grid.volume();
        if ((mass - expected) / expected).abs() > 1e-8 {
            return Err(Error::IncompatibleData { mass, expected });
        }
    }
    let mut u = match &opts.warm_start {
        Some(w) => {
            grid.check_same(w.grid())?;
            w.clone()
        }
        None => PotentialField::zeros(grid),
    };
    if degenerate {
        u = u.add_constant(-u.mean());
    }
    let mut c = 0.0;
    let mut log = Vec::new();
    let shifted = |c: f64| g.add_constant(c);
    let (mut r, mut lin) = newton_residual_and_linearization(&u, alpha, &shifted(c), h, twist, t)?;
    let mut res = sup_norm(r.values());
    log.push(NewtonLogRow { iteration: 0, residual: res, damping: 0.0, gmres_iterations: 0 });
    for it in 1..=opts.max_newton {
        if res <= opts.tol {
            break;
        }
        let mut rhs: Vec<f64> = r.values().iter().map(|v| -v).collect();
        let mut dc = 0.0;
        if degenerate {
            // project onto the range of L: zero mean against det M
            let w = lin.metric.det();
            let wsum: f64 = w.values().iter().sum();
            dc = -dot(&rhs, w.values()) / wsum;
            for v in rhs.iter_mut() {
                *v += dc;
            }
        }
        let pre = Precond::new(&lin);
        let (delta, inner) = gmres(&lin, &pre, &rhs, opts)?;
        let mut lambda = 1.0;
        loop {
            let cand = PotentialField::from_values(
                grid,
                u.values().iter().zip(&delta).map(|(u, d)| u + lambda * d).collect(),
            )?;
            let cand = if degenerate { cand.add_constant(-cand.mean()) } else { cand };
            let cc = c + lambda * dc;
            match newton_residual_and_linearization(&cand, alpha, &shifted(cc), h, twist, t) {
                Ok((r2, l2)) => {
                    let res2 = sup_norm(r2.values());
                    if res2.is_finite() && res2 < (1.0 - 1e-4 * lambda) * res {
                        u = cand;
                        c = cc;
                        r = r2;
                        lin = l2;
                        res = res2;
                        break;
                    }
                }
                Err(Error::KaehlerConeViolation { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
            if lambda < 2f64.powi(-20) {
                return Err(Error::NewtonDiverged { iterations: it, residual: res });
            }
        }
        log.push(NewtonLogRow { iteration: it, residual: res, damping: lambda, gmres_iterations: inner });
    }
    if !(res <= opts.tol.max(1e-9)) {
        return Err(Error::NewtonDiverged { iterations: opts.max_newton, residual: res });
    }
    Ok(Solution { u, residual: res, constant: c, log })
}

pub fn write_solver_log(path: impl AsRef<Path>, log: &[NewtonLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
