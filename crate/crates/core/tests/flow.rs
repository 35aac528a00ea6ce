//! Structural properties of the flow engine.

use std::f64::consts::PI;

use maflow::elliptic::{solve_ma, solve_ma_with};
use maflow::flow::normalize_h;
use maflow::{run, run_from, t_max, Error, FlowConfig, PotentialField, TorusGrid, TwistSpec, Variant};

fn bump(grid: TorusGrid) -> PotentialField {
    PotentialField::from_fn(grid, |x| {
        0.02 * (2.0 * PI * x[0]).cos() + 0.01 * (2.0 * PI * (x[0] + x[1])).sin()
    })
}

fn config(grid: TorusGrid, variant: Variant, horizon: f64) -> FlowConfig {
    FlowConfig::new(grid).with_variant(variant).with_horizon(horizon).with_record_every(10)
}

#[test]
fn comparison_principle() {
    let g = TorusGrid::unit(1, 16).unwrap();
    let low = bump(g);
    let high = low.zip_map(&bump(g).scale(-0.5), |a, b| a.max(a + b + 0.005)).unwrap();
    assert!(low.values().iter().zip(high.values()).all(|(a, b)| a <= b));
    for variant in [Variant::Cmaf, Variant::Ncmaf] {
        let cfg = config(g, variant, 0.2);
        let (a, b) = (run(&low, &cfg).unwrap(), run(&high, &cfg).unwrap());
        assert!(
            a.last().phi.values().iter().zip(b.last().phi.values()).all(|(x, y)| *x <= y + 1e-12),
            "{variant:?}"
        );
    }
}

#[test]
fn constant_shift_equivariance() {
    let g = TorusGrid::unit(2, 8).unwrap();
    let phi0 = bump(g);
    let a = 0.75;
    for variant in [Variant::Cmaf, Variant::Ncmaf] {
        let cfg = config(g, variant, 0.3);
        let base = run(&phi0, &cfg).unwrap();
        let shifted = run(&phi0.add_constant(a), &cfg).unwrap();
        assert_eq!(base.states().len(), shifted.states().len());
        for (s, t) in base.states().iter().zip(shifted.states()) {
            assert!((s.t - t.t).abs() < 1e-12);
            let expect = match variant {
                Variant::Cmaf => a,
                Variant::Ncmaf => a * t.t.exp(),
            };
            let d = t.phi.lin_comb(1.0, &s.phi, -1.0).unwrap();
            assert!(d.values().iter().all(|v| (v - expect).abs() < 1e-9), "{variant:?} at t = {}", s.t);
        }
    }
}

#[test]
fn restart_is_bit_exact() {
    let g = TorusGrid::unit(1, 16).unwrap();
    let cfg = config(g, Variant::Cmaf, 0.1).with_twist(TwistSpec::scalar(g, 0.5));
    let full = run(&bump(g), &cfg).unwrap();
    let mid = &full.states()[full.states().len() / 2];
    let rest = run_from(mid.t, &mid.phi, mid.step_count, &cfg).unwrap();
    assert_eq!(rest.last().t, full.last().t);
    assert_eq!(rest.last().step_count, full.last().step_count);
    assert_eq!(rest.last().phi.values(), full.last().phi.values());
}

#[test]
fn twist_horizon() {
    let g = TorusGrid::unit(1, 8).unwrap();
    assert_eq!(t_max(&TwistSpec::scalar(g, 0.3)), f64::INFINITY);
    assert_eq!(t_max(&TwistSpec::scalar(g, -0.5)), 2.0);
    let bad = config(g, Variant::Cmaf, 2.5).with_twist(TwistSpec::scalar(g, -0.5));
    assert!(run(&PotentialField::zeros(g), &bad).is_err());
    let ok = config(g, Variant::Cmaf, 0.45).with_twist(TwistSpec::scalar(g, -1.0));
    let tr = run(&PotentialField::zeros(g), &ok).unwrap();
    // phi = 0 gives d phi/dt = n log(1 - t).
    let t = tr.last().t;
    let exact = (1.0 - t) * (1.0 - t).ln() - (1.0 - t) + 1.0;
    assert!((tr.last().phi.values()[0] + exact).abs() < 1e-8);
}

#[test]
fn elliptic_solution_is_a_translating_soliton() {
    // If log det(I + H u) = h + c then phi_t = u + c t solves CMAF.
    let g = TorusGrid::unit(1, 16).unwrap();
    let h = normalize_h(&PotentialField::from_fn(g, |x| 0.2 * (2.0 * PI * x[1]).cos()));
    let zero = PotentialField::zeros(g);
    let sol = solve_ma_with(0.0, &zero, &h, &TwistSpec::zero(g), 0.0, &Default::default()).unwrap();
    let cfg = config(g, Variant::Cmaf, 0.5).with_h(h.clone()).unwrap();
    let tr = run(&sol.u, &cfg).unwrap();
    for s in tr.states() {
        let expect = sol.u.add_constant(sol.constant * s.t);
        assert!(s.phi.sup_distance(&expect).unwrap() <= 1e-7 * s.t.max(1e-3), "t = {}", s.t);
    }
    // alpha > 0 with trivial data.
    let u = solve_ma(1.0, &zero, &zero, &TwistSpec::zero(g), 0.0).unwrap();
    assert!(u.values().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn cone_violation_is_an_error() {
    let g = TorusGrid::unit(1, 16).unwrap();
    let phi = PotentialField::from_fn(g, |x| 0.2 * (2.0 * PI * x[0]).cos());
    let err = run(&phi, &config(g, Variant::Cmaf, 0.1)).unwrap_err();
    match err {
        Error::FlowFailed { t, source } => {
            assert_eq!(t, 0.0);
            assert!(matches!(*source, Error::KaehlerConeViolation { .. }), "{source:?}");
        }
        e => panic!("{e:?}"),
    }
}
