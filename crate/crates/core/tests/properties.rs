//! Property tests for the pointwise linear algebra and the spectral geometry.
//! Expected values come from closed forms evaluated here, not from the
//! library.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use maflow::geometry::{complex_hessian, integrate};
use maflow::{Herm, PotentialField, TorusGrid};
use num_complex::Complex64;
use proptest::prelude::*;

/// One Fourier mode `amp cos(2 pi k.x / L + phase)` over the real axes.
#[derive(Debug, Clone)]
struct Wave {
    amp: f64,
    k: [i32; 4],
    phase: f64,
}

fn waves(n: usize, kmax: i32) -> impl Strategy<Value = Vec<Wave>> {
    let dims = 2 * n;
    prop::collection::vec(
        (-0.05..0.05f64, prop::collection::vec(-kmax..=kmax, dims), 0.0..(2.0 * PI)).prop_map(
            move |(amp, ks, phase)| {
                let mut k = [0; 4];
                k[..ks.len()].copy_from_slice(&ks);
                Wave { amp, k, phase }
            },
        ),
        1..5,
    )
}

fn sample(grid: TorusGrid, w: &[Wave]) -> PotentialField {
    let l = grid.period();
    PotentialField::from_fn(grid, |x| {
        w.iter()
            .map(|m| {
                let th: f64 = (0..grid.dims()).map(|a| m.k[a] as f64 * x[a]).sum::<f64>() * 2.0 * PI / l;
                m.amp * (th + m.phase).cos()
            })
            .sum()
    })
}

/// `d^2/dz_j dzbar_k` of the waves at `x`, from the real second derivatives
/// `d_a d_b cos(theta) = -q_a q_b cos(theta)`.
fn exact_hessian(grid: &TorusGrid, w: &[Wave], x: &[f64]) -> [[Complex64; 2]; 2] {
    let l = grid.period();
    let mut d2 = [[0.0; 4]; 4];
    for m in w {
        let q: Vec<f64> = m.k.iter().map(|&k| 2.0 * PI * k as f64 / l).collect();
        let th: f64 = (0..grid.dims()).map(|a| q[a] * x[a]).sum::<f64>() + m.phase;
        for a in 0..4 {
            for b in 0..4 {
                d2[a][b] -= m.amp * q[a] * q[b] * th.cos();
            }
        }
    }
    let mut h = [[Complex64::default(); 2]; 2];
    for j in 0..grid.n() {
        for k in 0..grid.n() {
            let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
            h[j][k] = 0.25
                * Complex64::new(d2[xj][xk] + d2[yj][yk], d2[xj][yk] - d2[yj][xk]);
        }
    }
    h
}

fn herm2() -> impl Strategy<Value = Herm> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64)
        .prop_map(|(a, d, re, im)| Herm::Two { a, d, b: Complex64::new(re, im) })
}

/// A positive definite 2x2 matrix `L L^*` with `L` lower triangular.
fn pd2() -> impl Strategy<Value = Herm> {
    (0.1..2.0f64, 0.1..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(l11, l22, re, im)| {
        let l21 = Complex64::new(re, im);
        Herm::Two { a: l11 * l11, d: l21.norm_sqr() + l22 * l22, b: l11 * l21.conj() }
    })
}

fn dense(m: &Herm) -> [[Complex64; 2]; 2] {
    [[m.entry(0, 0), m.entry(0, 1)], [m.entry(1, 0), m.entry(1, 1)]]
}

fn det2(m: [[Complex64; 2]; 2]) -> f64 {
    (m[0][0] * m[1][1] - m[0][1] * m[1][0]).re
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn eigenvalues_solve_the_characteristic_equation(m in herm2()) {
        let (lo, hi) = m.eigenvalues();
        prop_assert!(lo <= hi);
        let scale = 1.0 + lo.abs().max(hi.abs());
        let tr = m.entry(0, 0).re + m.entry(1, 1).re;
        prop_assert!((lo + hi - tr).abs() <= 1e-12 * scale);
        for lam in [lo, hi] {
            let mut a = dense(&m);
            a[0][0] -= lam;
            a[1][1] -= lam;
            prop_assert!(det2(a).abs() <= 1e-11 * scale * scale);
        }
    }

    #[test]
    fn det_and_trace_match_dense_formulas(m in herm2()) {
        let d = dense(&m);
        prop_assert!((m.det() - det2(d)).abs() <= 1e-12 * (1.0 + det2(d).abs()));
        prop_assert!((m.trace() - (d[0][0] + d[1][1]).re).abs() <= 1e-14);
    }

    #[test]
    fn mixed_det_polarizes(a in herm2(), b in herm2()) {
        let sum = det2(dense(&a.add(&b)));
        let lhs = det2(dense(&a)) + 2.0 * a.mixed_det(&b) + det2(dense(&b));
        prop_assert!((sum - lhs).abs() <= 1e-12 * (1.0 + sum.abs()));
    }

    #[test]
    fn trace_inequality(a in pd2(), b in pd2()) {
        // tr(A^-1 B) >= n (det B / det A)^(1/n), equality iff B is a multiple of A.
        let tr = a.trace_inv_times(&b).unwrap();
        let bound = 2.0 * (b.det() / a.det()).sqrt();
        prop_assert!(tr >= bound * (1.0 - 1e-10), "{tr} < {bound}");
        let tr_self = a.trace_inv_times(&a.scale(3.0)).unwrap();
        prop_assert!((tr_self - 6.0).abs() <= 1e-9);
    }

    #[test]
    fn inverse_is_two_sided(m in pd2()) {
        let inv = m.inverse().unwrap();
        let (x, y) = (dense(&m), dense(&inv));
        for i in 0..2 {
            for j in 0..2 {
                let p = x[i][0] * y[0][j] + x[i][1] * y[1][j];
                let e = if i == j { 1.0 } else { 0.0 };
                prop_assert!((p - e).norm() <= 1e-9 * (1.0 + m.max_eig() / m.min_eig()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectral_hessian_is_exact_on_trig_polynomials(
        n in 1usize..=2,
        period in prop::sample::select(vec![1.0, 1.5, 2.0]),
        w1 in waves(1, 3),
        w2 in waves(2, 3),
    ) {
        let w = if n == 1 { w1 } else { w2 };
        let grid = TorusGrid::new(n, if n == 1 { 16 } else { 8 }, period).unwrap();
        let h = complex_hessian(&sample(grid, &w));
        for i in 0..grid.len() {
            let exact = exact_hessian(&grid, &w, &grid.coords(i));
            let got = h.at(i);
            for j in 0..n {
                for k in 0..n {
                    prop_assert!((got.entry(j, k) - exact[j][k]).norm() < 1e-10, "({j},{k}) at {i}");
                }
            }
        }
    }

    #[test]
    fn hessian_is_linear(n in 1usize..=2, w1 in waves(2, 3), w2 in waves(2, 3), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let grid = TorusGrid::unit(n, 8).unwrap();
        let (p, q) = (sample(grid, &w1), sample(grid, &w2));
        let lhs = complex_hessian(&p.lin_comb(a, &q, b).unwrap());
        let rhs = complex_hessian(&p).affine(a, 0.0).add(&complex_hessian(&q).affine(b, 0.0)).unwrap();
        for i in 0..grid.len() {
            let (x, y) = (lhs.at(i), rhs.at(i));
            for j in 0..n {
                for k in 0..n {
                    prop_assert!((x.entry(j, k) - y.entry(j, k)).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn laplacian_integrates_to_zero(n in 1usize..=2, w in waves(2, 3), c in -1.0..1.0f64) {
        let grid = TorusGrid::unit(n, 8).unwrap();
        let phi = sample(grid, &w).add_constant(c);
        let tr = complex_hessian(&phi).trace();
        prop_assert!(integrate(&tr).abs() < 1e-12);
    }

    #[test]
    fn volume_identity_holds_for_any_potential(n in 1usize..=2, w in waves(2, 3)) {
        // int det(I + H phi) = V: the non-constant terms are exact forms.
        let grid = TorusGrid::unit(n, 8).unwrap();
        let m = complex_hessian(&sample(grid, &w)).affine(1.0, 1.0);
        let vol = integrate(&m.det());
        prop_assert!((vol - grid.volume()).abs() < 1e-12, "{vol}");
    }
}
