//! Randomized invariants.

use std::f64::consts::PI;

use proptest::prelude::*;

use dubins_penalty::adjoint::{evaluate, fd_gradient_oracle, max_relative_error};
use dubins_penalty::model::{dynamics_rhs, wrap_angle, ControlValue, Curve, ObstacleTrajectory, Scenario, State};
use dubins_penalty::parametrization::{segment_index, ControlParams};
use dubins_penalty::penalty::{penalty_cost, violation, PenaltyConfig};
use dubins_penalty::simulate::{integrate_forward, path_length_xy, IntegratorConfig};

fn controls(p: usize) -> impl Strategy<Value = ControlParams> {
    (
        prop::collection::vec((-PI..PI, -1.0..1.0f64), p),
        prop::collection::vec(0.05..3.0f64, p),
        1e-3..0.1f64,
    )
        .prop_map(|(sigma, rho, eps)| {
            ControlParams::new(sigma.into_iter().map(|(t, h)| ControlValue::new(t, h)).collect(), rho, eps)
                .unwrap()
        })
}

fn open_scenario(p: usize, obstacles: Vec<ObstacleTrajectory>) -> Scenario {
    Scenario {
        start: State::ZERO,
        goal: State::new(1.0, 1.0, 1.0),
        theta0: None,
        v_xy: 1.0,
        hdot_max: 1.0,
        safety_radius: 0.2,
        obstacles,
        segments: p,
        t_hint: 1.7,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn time_map_is_monotone_and_hits_grid(rho in prop::collection::vec(1e-4..10.0f64, 1..16)) {
        let p = rho.len();
        let params = ControlParams::new(vec![ControlValue::default(); p], rho.clone(), 0.0).unwrap();
        prop_assert_eq!(params.time_at(0.0), 0.0);
        prop_assert_eq!(params.time_at(1.0), params.horizon());
        let mut partial = 0.0;
        for (k, r) in rho.iter().enumerate() {
            let t = params.time_at(k as f64 / p as f64);
            prop_assert!((t - partial).abs() <= 1e-12 * (1.0 + partial));
            partial += r / p as f64;
        }
        let mut prev = 0.0;
        for i in 0..=200 {
            let t = params.time_at(i as f64 / 200.0);
            prop_assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn segment_index_brackets_s(p in 1usize..50, s in 0.0..=1.0f64) {
        let k = segment_index(p, s);
        prop_assert!(k < p);
        prop_assert!(k as f64 / p as f64 <= s + 1e-15);
        prop_assert!(s < (k + 1) as f64 / p as f64 || k == p - 1);
    }

    #[test]
    fn planar_speed_is_constant(theta in -10.0..10.0f64, hdot in -2.0..2.0f64, v in 0.1..5.0f64) {
        let f = dynamics_rhs(ControlValue::new(theta, hdot), v);
        prop_assert!((f.planar_norm() - v).abs() < 1e-12 * v);
        prop_assert_eq!(f.z, hdot);
    }

    #[test]
    fn wrapped_angles_are_equivalent(theta in -100.0..100.0f64) {
        let w = wrap_angle(theta);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!((w.sin() - theta.sin()).abs() < 1e-9 && (w.cos() - theta.cos()).abs() < 1e-9);
    }

    #[test]
    fn planar_path_length_is_speed_times_horizon(params in controls(4)) {
        let sc = open_scenario(4, vec![]);
        let tr = integrate_forward(&sc, &params, &IntegratorConfig::default()).unwrap();
        prop_assert!((path_length_xy(&tr) - params.horizon()).abs() < 1e-9 * (1.0 + params.horizon()));
        prop_assert_eq!(tr.samples[0].state, sc.start);
        for smp in &tr.samples {
            prop_assert!((smp.t - params.time_at(smp.s)).abs() <= 1e-12 * (1.0 + smp.t));
        }
    }

    #[test]
    fn penalty_cost_dominates_horizon(params in controls(3), delta in 1.0..1e4f64) {
        let obs = ObstacleTrajectory::single(
            Curve::Line { origin: State::ZERO, velocity: State::new(1.0, 1.0, 1.0) }, 0.1, 5.0, 0.1,
        ).unwrap();
        let sc = open_scenario(3, vec![obs]);
        let cfg = PenaltyConfig::default();
        let tr = integrate_forward(&sc, &params, &IntegratorConfig::default()).unwrap();
        let l = violation(&sc, &params, &tr);
        prop_assert!(l >= 0.0);
        prop_assert!(penalty_cost(&sc, &params, &tr, &cfg, delta) >= params.horizon());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_matches_central_differences(params in controls(3), delta in 1.0..1e3f64) {
        let line = Curve::Line { origin: State::new(0.2, 0.0, 0.1), velocity: State::new(0.8, 1.0, 0.9) };
        let obs = ObstacleTrajectory::single(line, 0.1, 5.0, 0.1).unwrap();
        let sc = open_scenario(3, vec![obs]);
        let cfg = PenaltyConfig::default();
        let integ = IntegratorConfig { steps_per_segment: 8 };
        let ev = evaluate(&sc, &params, &integ, &cfg, delta).unwrap();
        let fd = fd_gradient_oracle(&sc, &params, &integ, &cfg, delta, 1e-6).unwrap();
        let err = max_relative_error(&ev.gradient, &fd, 1e-6);
        prop_assert!(err <= 1e-4, "rel err {}", err);
    }
}
