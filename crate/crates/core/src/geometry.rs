//! Flat-torus calculus: complex Hessians, Monge-Ampere ratios, Laplacians
//! with respect to evolving metrics, and quadrature.
//!
//! Normalization: the reference form is the flat metric with local matrix
//! `I`, and `dd^c` is represented by the complex Hessian
//! `H(phi)_{jk} = d^2 phi / dz_j dzbar_k` with `d/dz = (d/dx - i d/dy)/2`.
//! With this convention `(omega + dd^c phi)^n / omega^n = det(I + H(phi))`
//! and `gamma * log|z|` has Lelong number `gamma`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::TwistSpec;
use crate::grid::{PotentialField, TorusGrid};
use crate::herm::Herm;
use crate::spectral::{spectral, Spectral};

/// A Hermitian `n x n` matrix per gridpoint. For `n = 1` only `a` is used.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    grid: TorusGrid,
    a: Vec<f64>,
    d: Vec<f64>,
    b: Vec<Complex64>,
}

impl HermitianField {
    pub fn from_fn(grid: TorusGrid, f: impl Fn(usize) -> Herm) -> Self {
        let len = grid.len();
        let mut a = Vec::with_capacity(len);
        let mut d = Vec::new();
        let mut b = Vec::new();
        if grid.n() == 2 {
            d.reserve(len);
            b.reserve(len);
        }
        for i in 0..len {
            match f(i) {
                Herm::One(x) => a.push(x),
                Herm::Two { a: x, d: y, b: z } => {
                    a.push(x);
                    d.push(y);
                    b.push(z);
                }
            }
        }
        Self { grid, a, d, b }
    }

    pub fn constant(grid: TorusGrid, m: Herm) -> Self {
        Self::from_fn(grid, |_| m)
    }

    pub(crate) fn from_parts(grid: TorusGrid, a: Vec<f64>, d: Vec<f64>, b: Vec<Complex64>) -> Self {
        Self { grid, a, d, b }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    #[inline]
    pub fn at(&self, i: usize) -> Herm {
        if self.grid.n() == 1 {
            Herm::One(self.a[i])
        } else {
            Herm::Two { a: self.a[i], d: self.d[i], b: self.b[i] }
        }
    }

    /// `s * self + shift * I`.
    pub fn affine(&self, s: f64, shift: f64) -> Self {
        Self {
            grid: self.grid,
            a: self.a.iter().map(|x| s * x + shift).collect(),
            d: self.d.iter().map(|x| s * x + shift).collect(),
            b: self.b.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x + y).collect(),
            d: self.d.iter().zip(&other.d).map(|(x, y)| x + y).collect(),
            b: self.b.iter().zip(&other.b).map(|(x, y)| x + y).collect(),
        })
    }

    pub fn trace(&self) -> PotentialField {
        let v = (0..self.len()).map(|i| self.at(i).trace()).collect();
        PotentialField::from_values(self.grid, v).expect("same grid")
    }

    pub fn det(&self) -> PotentialField {
        let v = (0..self.len()).map(|i| self.at(i).det()).collect();
        PotentialField::from_values(self.grid, v).expect("same grid")
    }

    /// Smallest and largest eigenvalue over the whole grid.
    pub fn eigen_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.len() {
            let (l0, l1) = self.at(i).eigenvalues();
            lo = lo.min(l0);
            hi = hi.max(l1);
        }
        (lo, hi)
    }
}

/// Local matrix of `theta_t + dd^c phi`, positive definite at every point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField(HermitianField);

impl MetricField {
    /// Wrap a Hermitian field, checking positivity.
    pub fn new(field: HermitianField) -> Result<Self> {
        let mut worst = f64::INFINITY;
        let mut at = 0;
        for i in 0..field.len() {
            let l = field.at(i).min_eig();
            if !(l > worst) {
                worst = l;
                at = i;
            }
        }
        if !(worst > 0.0) {
            return Err(Error::KaehlerConeViolation { min_eig: worst, index: at });
        }
        Ok(Self(field))
    }

    pub fn identity(grid: TorusGrid) -> Self {
        Self(HermitianField::constant(grid, Herm::identity(grid.n())))
    }

    pub fn field(&self) -> &HermitianField {
        &self.0
    }

    pub fn grid(&self) -> &TorusGrid {
        self.0.grid()
    }

    pub fn at(&self, i: usize) -> Herm {
        self.0.at(i)
    }
}

/// Spectral complex Hessian of raw grid values.
pub(crate) fn hessian_parts(
    s: &Spectral,
    values: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<Complex64>) {
    let grid = *s.grid();
    let spec = s.forward(values);
    if grid.n() == 1 {
        let mut out = spec;
        for (i, c) in out.iter_mut().enumerate() {
            let k = s.wavevector(i);
            *c *= -0.25 * (k[0] * k[0] + k[1] * k[1]) * s.mask(i);
        }
        return (s.inverse_real(out), Vec::new(), Vec::new());
    }
    let mut diag = vec![Complex64::default(); spec.len()];
    let mut off = vec![Complex64::default(); spec.len()];
    for (i, &c) in spec.iter().enumerate() {
        let k = s.wavevector(i);
        let m = s.mask(i);
        let s11 = -0.25 * (k[0] * k[0] + k[1] * k[1]) * m;
        let s22 = -0.25 * (k[2] * k[2] + k[3] * k[3]) * m;
        let sre = -0.25 * (k[0] * k[2] + k[1] * k[3]) * m;
        let sim = -0.25 * (k[0] * k[3] - k[1] * k[2]) * m;
        diag[i] = c * s11 + Complex64::i() * c * s22;
        off[i] = c * sre + Complex64::i() * c * sim;
    }
    let (a, d) = s.inverse_pair(diag);
    let (bre, bim) = s.inverse_pair(off);
    let b = bre.into_iter().zip(bim).map(|(r, i)| Complex64::new(r, i)).collect();
    (a, d, b)
}

/// `H(phi)_{jk} = d^2 phi / dz_j dzbar_k`, computed pseudospectrally.
pub fn complex_hessian(phi: &PotentialField) -> HermitianField {
    let grid = *phi.grid();
    let s = spectral(&grid);
    let (a, d, b) = hessian_parts(&s, phi.values());
    HermitianField::from_parts(grid, a, d, b)
}

/// Flat complex Laplacian `tr H(phi) = (1/4) * Laplacian(phi)`.
pub fn flat_trace_hessian(phi: &PotentialField) -> PotentialField {
    let grid = *phi.grid();
    let s = spectral(&grid);
    let v = s.apply_symbol(phi.values(), |k| -0.25 * k.iter().map(|x| x * x).sum::<f64>());
    PotentialField::from_values(grid, v).expect("same grid")
}

/// Local matrix `(1 + t c) I + H(t psi_chi + phi)` of `theta_t + dd^c phi`.
pub fn metric_matrix(phi: &PotentialField, twist: &TwistSpec, t: f64) -> Result<MetricField> {
    let field = metric_matrix_unchecked(phi, twist, t)?;
    MetricField::new(field)
}

pub(crate) fn metric_matrix_unchecked(
    phi: &PotentialField,
    twist: &TwistSpec,
    t: f64,
) -> Result<HermitianField> {
    let grid = *phi.grid();
    twist.psi_chi().grid().check_same(&grid)?;
    let h = complex_hessian(phi);
    let shift = 1.0 + t * twist.c();
    let m = if twist.has_exact_part() {
        h.add(&twist.hessian().affine(t, 0.0))?.affine(1.0, shift)
    } else {
        h.affine(1.0, shift)
    };
    Ok(m)
}

/// `(theta_t + dd^c phi)^n / omega^n = det M_t`.
pub fn ma_ratio(phi: &PotentialField, twist: &TwistSpec, t: f64) -> Result<PotentialField> {
    let m = metric_matrix(phi, twist, t)?;
    Ok(m.field().det())
}

/// `tr_M(dd^c psi) = sum (M^{-1})_{kj} H(psi)_{jk}`.
pub fn laplacian_wrt(m: &MetricField, psi: &PotentialField) -> Result<PotentialField> {
    m.grid().check_same(psi.grid())?;
    let h = complex_hessian(psi);
    trace_wrt(m, &h)
}

/// `tr_M(N) = sum (M^{-1})_{kj} N_{jk}`.
pub fn trace_wrt(m: &MetricField, nf: &HermitianField) -> Result<PotentialField> {
    m.grid().check_same(nf.grid())?;
    let mut out = Vec::with_capacity(nf.len());
    for i in 0..nf.len() {
        let mi = m.at(i);
        match mi.trace_inv_times(&nf.at(i)) {
            Some(v) if v.is_finite() => out.push(v),
            _ => return Err(Error::SingularMetric { det: mi.det(), index: i }),
        }
    }
    PotentialField::from_values(*m.grid(), out)
}

/// `int_X f omega^n`, the grid mean times the volume (spectrally exact for
/// band-limited integrands).
pub fn integrate(f: &PotentialField) -> f64 {
    f.mean() * f.grid().volume()
}

/// Global minimum over gridpoints of the smallest eigenvalue.
pub fn min_eigenvalue(m: &HermitianField) -> f64 {
    m.eigen_range().0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn zero_twist(grid: TorusGrid, c: f64) -> TwistSpec {
        TwistSpec::new(c, PotentialField::zeros(grid)).unwrap()
    }

    #[test]
    fn hessian_of_constant_vanishes() {
        let g = TorusGrid::unit(2, 8).unwrap();
        let h = complex_hessian(&PotentialField::constant(g, 3.7));
        let (lo, hi) = h.eigen_range();
        assert!(lo.abs() < 1e-12 && hi.abs() < 1e-12);
    }

    #[test]
    fn hessian_of_single_mode() {
        let g = TorusGrid::unit(1, 32).unwrap();
        let eps = 0.05;
        let phi = PotentialField::from_fn(g, |x| eps * (2.0 * PI * x[0]).cos());
        let h = complex_hessian(&phi);
        for i in 0..g.len() {
            let x = g.coords(i);
            let expect = -PI * PI * eps * (2.0 * PI * x[0]).cos();
            assert!((h.at(i).trace() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_potential_has_diagonal_hessian() {
        let g = TorusGrid::unit(2, 8).unwrap();
        let phi = PotentialField::from_fn(g, |x| {
            0.01 * (2.0 * PI * x[0]).sin() + 0.02 * (2.0 * PI * (x[2] + x[3])).cos()
        });
        let h = complex_hessian(&phi);
        let u = PotentialField::from_fn(TorusGrid::unit(1, 8).unwrap(), |x| 0.01 * (2.0 * PI * x[0]).sin());
        let v = PotentialField::from_fn(TorusGrid::unit(1, 8).unwrap(), |x| {
            0.02 * (2.0 * PI * (x[0] + x[1])).cos()
        });
        let hu = complex_hessian(&u);
        let hv = complex_hessian(&v);
        for i in 0..g.len() {
            let idx = g.axis_indices(i);
            let i1 = idx[0] * 8 + idx[1];
            let i2 = idx[2] * 8 + idx[3];
            match h.at(i) {
                Herm::Two { a, d, b } => {
                    assert!((a - hu.at(i1).trace()).abs() < 1e-13);
                    assert!((d - hv.at(i2).trace()).abs() < 1e-13);
                    assert!(b.norm() < 1e-13);
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn metric_matrix_examples() {
        let g = TorusGrid::unit(2, 8).unwrap();
        let phi = PotentialField::zeros(g);
        let m = metric_matrix(&phi, &zero_twist(g, 0.0), 0.7).unwrap();
        assert_eq!(m.at(5), Herm::identity(2));
        let m = metric_matrix(&phi, &zero_twist(g, -0.5), 1.0).unwrap();
        assert!((m.at(11).min_eig() - 0.5).abs() < 1e-15);

        // n = 1 single mode: violation iff pi^2 eps >= 1
        let g1 = TorusGrid::unit(1, 16).unwrap();
        for (eps, ok) in [(0.09, true), (1.0 / (PI * PI) + 1e-3, false)] {
            let phi = PotentialField::from_fn(g1, |x| eps * (2.0 * PI * x[0]).cos());
            let r = metric_matrix(&phi, &zero_twist(g1, 0.0), 2.0);
            assert_eq!(r.is_ok(), ok, "eps = {eps}");
        }
        let phi = PotentialField::from_fn(g1, |x| 1.5 * (2.0 * PI * x[0]).cos());
        assert!(matches!(
            metric_matrix(&phi, &zero_twist(g1, 0.0), 0.0),
            Err(Error::KaehlerConeViolation { .. })
        ));
    }

    #[test]
    fn ma_ratio_examples() {
        let g = TorusGrid::unit(2, 8).unwrap();
        let r = ma_ratio(&PotentialField::zeros(g), &zero_twist(g, 0.0), 0.0).unwrap();
        assert!(r.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        // separable: product of one-dimensional ratios
        let phi = PotentialField::from_fn(g, |x| {
            0.03 * (2.0 * PI * x[0]).cos() + 0.02 * (2.0 * PI * x[3]).sin()
        });
        let r = ma_ratio(&phi, &zero_twist(g, 0.0), 0.0).unwrap();
        for i in 0..g.len() {
            let x = g.coords(i);
            let r1 = 1.0 - PI * PI * 0.03 * (2.0 * PI * x[0]).cos();
            let r2 = 1.0 - PI * PI * 0.02 * (2.0 * PI * x[3]).sin();
            assert!((r.values()[i] - r1 * r2).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_wrt_scalar_metric() {
        let g = TorusGrid::unit(2, 8).unwrap();
        let psi = PotentialField::from_fn(g, |x| (2.0 * PI * (x[0] - x[2])).sin());
        let flat = flat_trace_hessian(&psi);
        let id = laplacian_wrt(&MetricField::identity(g), &psi).unwrap();
        let m = MetricField::new(HermitianField::constant(g, Herm::scalar(2, 2.5))).unwrap();
        let scaled = laplacian_wrt(&m, &psi).unwrap();
        for i in 0..g.len() {
            assert!((id.values()[i] - flat.values()[i]).abs() < 1e-12);
            assert!((scaled.values()[i] - flat.values()[i] / 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_wrt_examples() {
        let g = TorusGrid::unit(2, 8).unwrap();
        let m = MetricField::new(HermitianField::constant(
            g,
            Herm::Two { a: 2.0, d: 1.5, b: Complex64::new(0.3, 0.2) },
        ))
        .unwrap();
        let t = trace_wrt(&m, m.field()).unwrap();
        assert!(t.values().iter().all(|&v| (v - 2.0).abs() < 1e-14));
        let n = HermitianField::constant(g, Herm::diag2(0.7, 1.9));
        let t = trace_wrt(&MetricField::identity(g), &n).unwrap();
        assert!(t.values().iter().all(|&v| (v - 2.6).abs() < 1e-14));
    }

    #[test]
    fn integrate_examples() {
        let g = TorusGrid::new(1, 16, 1.0).unwrap();
        assert!((integrate(&PotentialField::constant(g, 3.0)) - 3.0).abs() < 1e-14);
        let c = PotentialField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert!(integrate(&c).abs() < 1e-14);
        let c2 = c.map(|v| v * v);
        assert!((integrate(&c2) - 0.5).abs() < 1e-14);
        let g2 = TorusGrid::new(2, 8, 2.0).unwrap();
        assert!((integrate(&PotentialField::constant(g2, 1.0)) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_examples() {
        let g = TorusGrid::unit(2, 8).unwrap();
        assert_eq!(min_eigenvalue(&HermitianField::constant(g, Herm::identity(2))), 1.0);
        assert_eq!(min_eigenvalue(&HermitianField::constant(g, Herm::diag2(2.0, 0.3))), 0.3);
    }
}
