//! The elliptic solver and the initial-data module.

use std::f64::consts::PI;

use maflow::elliptic::{newton_residual_and_linearization, solve_ma};
use maflow::initial::{approximation_sequence, integrability_threshold, PotentialKind};
use maflow::{PotentialField, PotentialSpec, TorusGrid, TwistSpec};

fn wave(grid: TorusGrid, amp: f64) -> PotentialField {
    PotentialField::from_fn(grid, |x| {
        let s: f64 = x.iter().take(grid.dims()).sum();
        amp * (2.0 * PI * x[0]).cos() + 0.5 * amp * (2.0 * PI * s).sin()
    })
}

#[test]
fn newton_linearization_matches_finite_differences() {
    for n in [1, 2] {
        let g = TorusGrid::unit(n, 8).unwrap();
        let twist = TwistSpec::zero(g);
        let u = wave(g, 0.01);
        let v = PotentialField::from_fn(g, |x| (2.0 * PI * x[1]).cos());
        let zero = PotentialField::zeros(g);
        let g_data = wave(g, 0.3);
        let alpha = 0.7;
        let (_, lin) = newton_residual_and_linearization(&u, alpha, &g_data, &zero, &twist, 0.0).unwrap();
        let jv = lin.apply(&v).unwrap();
        let err = |s: f64| {
            let r = |sign: f64| {
                newton_residual_and_linearization(&u.lin_comb(1.0, &v, sign * s).unwrap(), alpha, &g_data, &zero, &twist, 0.0)
                    .unwrap()
                    .0
            };
            let fd = r(1.0).lin_comb(0.5 / s, &r(-1.0), -0.5 / s).unwrap();
            fd.sup_distance(&jv).unwrap()
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((3.5..4.5).contains(&ratio), "n = {n}: ratio {ratio}");
    }
}

#[test]
fn elliptic_comparison() {
    // g1 <= g2 implies u1 >= u2 when alpha > 0.
    let g = TorusGrid::unit(1, 16).unwrap();
    let twist = TwistSpec::zero(g);
    let zero = PotentialField::zeros(g);
    let g1 = wave(g, 0.2);
    let g2 = g1.zip_map(&wave(g, 0.1), |a, b| a + b.abs() + 0.01).unwrap();
    let u1 = solve_ma(1.0, &g1, &zero, &twist, 0.0).unwrap();
    let u2 = solve_ma(1.0, &g2, &zero, &twist, 0.0).unwrap();
    assert!(u1.values().iter().zip(u2.values()).all(|(a, b)| a >= b));
    // Constant data: n log alpha - alpha u = g.
    let u = solve_ma(2.0, &PotentialField::constant(g, 0.4), &zero, &twist, 0.0).unwrap();
    let expect = (2f64.ln() - 0.4) / 2.0;
    assert!(u.values().iter().all(|v| (v - expect).abs() < 1e-10), "{}", u.values()[0]);
}

#[test]
fn skoda_threshold_of_a_log_pole() {
    // e^{-2 beta gamma log|z|} is integrable in one complex dimension iff beta < 1 / gamma.
    let g = TorusGrid::unit(1, 32).unwrap();
    let beta = integrability_threshold(&PotentialSpec::lelong(0.5), &g, 0.01).unwrap();
    assert!((2.0 / 1.2..2.0 * 1.2).contains(&beta), "{beta}");
    let smooth = PotentialSpec::smooth(vec![]);
    assert_eq!(integrability_threshold(&smooth, &g, 0.01).unwrap(), f64::INFINITY);
}

#[test]
fn approximation_sequences_decrease_and_stay_in_the_cone() {
    let g = TorusGrid::unit(1, 32).unwrap();
    let specs = [
        PotentialSpec::lelong(0.5),
        PotentialSpec::zero_lelong(0.5),
        PotentialSpec::new(PotentialKind::BoundedDiscontinuous { gamma: 0.5, floor: 1.0, modes: vec![], z0: None }),
    ];
    for spec in &specs {
        let seq = approximation_sequence(spec, &g, 4).unwrap();
        let lv = seq.levels();
        assert_eq!(lv.len(), 4);
        assert!(seq.compensation() >= 2.0);
        for l in lv {
            assert!(l.min_eig > 0.0, "{:?} level {}", spec.kind, l.j);
            assert!(l.phi.values().iter().zip(seq.phi0().values()).all(|(a, b)| a >= b));
        }
        for w in lv.windows(2) {
            assert!(w[1].delta < w[0].delta);
            assert!(w[1].phi.values().iter().zip(w[0].phi.values()).all(|(a, b)| a <= b), "{:?}", spec.kind);
        }
    }
}
