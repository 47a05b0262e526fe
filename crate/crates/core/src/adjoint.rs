//! Co-state integration and analytic gradients of the penalty cost.
//!
//! The co-state is propagated backward over the same sample grid the forward
//! pass produced, so the gradient is the exact derivative of the discretized
//! cost (trapezoid quadrature in physical time, exact per-segment flight). Along with the
//! position co-state `lambda` a scalar co-state `mu` for physical time `t(s)`
//! is carried: obstacle positions depend on `t(s)`, which in turn depends on
//! every earlier `rho_k`.

use crate::error::{Error, Result};
use crate::model::{dynamics_dhdot, dynamics_dtheta, dynamics_rhs, ControlValue, Scenario, State};
use crate::parametrization::ControlParams;
use crate::penalty::{
    epsilon_derivative, interval_deficit, point_deficit, violation, IntervalPartials, PenaltyConfig,
};
use crate::simulate::{integrate_forward, IntegratorConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostateSample {
    pub s: f64,
    /// Co-state of the position `H(s)`.
    pub lambda: State,
    /// Co-state of the physical time `t(s)`.
    pub mu: f64,
}

/// Backward co-state on the forward sample grid. Sample `j` holds the
/// sensitivity of the cost to `H(s_j)` through everything strictly after
/// `s_j`, so the terminal sample is the boundary value `d psi0 / dH(1)`.
#[derive(Debug, Clone)]
pub struct CostateTrajectory {
    pub samples: Vec<CostateSample>,
}

/// Gradient of the penalty cost in decision-vector order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// `(dJ/dtheta_k, dJ/dhdot_k)`
    pub d_sigma: Vec<(f64, f64)>,
    pub d_rho: Vec<f64>,
    pub d_epsilon: f64,
}

impl Gradient {
    /// Flattened as `[dtheta.., dhdot.., drho.., deps]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.d_rho.len() + 1);
        v.extend(self.d_sigma.iter().map(|d| d.0));
        v.extend(self.d_sigma.iter().map(|d| d.1));
        v.extend_from_slice(&self.d_rho);
        v.push(self.d_epsilon);
        v
    }

    pub fn from_vector(p: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), 3 * p + 1, "gradient vector length");
        Self {
            d_sigma: (0..p).map(|k| (v[k], v[p + k])).collect(),
            d_rho: v[2 * p..3 * p].to_vec(),
            d_epsilon: v[3 * p],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|g| g.is_finite())
    }
}

/// Sum over obstacles of the squared deficit at `(state, t)`.
fn running_term(scenario: &Scenario, state: State, t: f64) -> f64 {
    scenario.obstacles.iter().map(|obs| point_deficit(scenario, obs, state, t).0).sum()
}

/// Hamiltonian `eps^-alpha sum_i L0_ik + lambda . rho_k f(H, sigma_k)` on a
/// segment with slope `rho_k` at physical time `t`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_h0(
    scenario: &Scenario,
    t: f64,
    state: State,
    control: ControlValue,
    rho_k: f64,
    lambda: State,
    epsilon: f64,
    cfg: &PenaltyConfig,
) -> f64 {
    let g = running_term(scenario, state, t);
    epsilon.powf(-cfg.alpha) * rho_k * g + lambda.dot(dynamics_rhs(control, scenario.v_xy)) * rho_k
}

/// Scaled partials of the quadrature interval `[s_j, s_{j+1}]`.
fn interval_partials(
    scenario: &Scenario,
    params: &ControlParams,
    traj: &Trajectory,
    j: usize,
    scale: f64,
) -> IntervalPartials {
    let lo = &traj.samples[j];
    let hi = &traj.samples[j + 1];
    let velocity = dynamics_rhs(params.sigma[j / traj.steps_per_segment], scenario.v_xy);
    let (_, d) = interval_deficit(scenario, (lo.state, lo.t), (hi.state, hi.t), velocity);
    IntervalPartials {
        d_state_lo: d.d_state_lo * scale,
        d_t_lo: d.d_t_lo * scale,
        d_state_hi: d.d_state_hi * scale,
        d_t_hi: d.d_t_hi * scale,
        d_velocity: d.d_velocity * scale,
    }
}

/// Backward sweep from `lambda(1) = 2 eps^-alpha (H(1) - goal)`, `mu(1) = 0`:
/// each interval adds its quadrature partials at both end nodes, the discrete
/// form of `d lambda / ds = -dH0/dH`.
pub fn integrate_costate(
    scenario: &Scenario,
    params: &ControlParams,
    traj: &Trajectory,
    cfg: &PenaltyConfig,
) -> Result<CostateTrajectory> {
    let scale = params.epsilon.powf(-cfg.alpha);
    let m = traj.samples.len() - 1;
    let mut out = vec![
        CostateSample { s: 0.0, lambda: State::ZERO, mu: 0.0 };
        traj.samples.len()
    ];
    let mut lambda = (traj.terminal() - scenario.goal) * (2.0 * scale);
    let mut mu = 0.0;
    out[m] = CostateSample { s: traj.samples[m].s, lambda, mu };
    for j in (0..m).rev() {
        let d = interval_partials(scenario, params, traj, j, scale);
        lambda += d.d_state_hi + d.d_state_lo;
        mu += d.d_t_hi + d.d_t_lo;
        if !(lambda.is_finite() && mu.is_finite()) {
            return Err(Error::NonfiniteState { s: traj.samples[j].s });
        }
        out[j] = CostateSample { s: traj.samples[j].s, lambda, mu };
    }
    Ok(CostateTrajectory { samples: out })
}

/// Analytic gradient from a forward trajectory and its co-state.
///
/// Step `j` of segment `k` advances `H` by `rho_k h f_k` and `t` by `rho_k h`,
/// so `rho_k` and `sigma_k` collect the co-state at the step's far node.
pub fn gradient(
    scenario: &Scenario,
    params: &ControlParams,
    traj: &Trajectory,
    costate: &CostateTrajectory,
    cfg: &PenaltyConfig,
    delta: f64,
) -> Gradient {
    let p = params.segments();
    let n = traj.steps_per_segment;
    let h = 1.0 / (p * n) as f64;
    let scale = params.epsilon.powf(-cfg.alpha);

    let mut d_sigma = Vec::with_capacity(p);
    let mut d_rho = Vec::with_capacity(p);
    for k in 0..p {
        let u = params.sigma[k];
        let f = dynamics_rhs(u, scenario.v_xy);
        let step = h * params.rho[k];
        let mut f_bar = State::ZERO;
        let mut rho_bar = 0.0;
        for j in k * n..(k + 1) * n {
            let d = interval_partials(scenario, params, traj, j, scale);
            let lam = costate.samples[j + 1].lambda + d.d_state_hi;
            let mu = costate.samples[j + 1].mu + d.d_t_hi;
            f_bar += lam * step + d.d_velocity;
            rho_bar += h * (lam.dot(f) + mu);
        }
        d_sigma.push((
            f_bar.dot(dynamics_dtheta(u, scenario.v_xy)),
            f_bar.dot(dynamics_dhdot()),
        ));
        d_rho.push(1.0 / p as f64 + rho_bar);
    }

    let l = violation(scenario, params, traj);
    Gradient { d_sigma, d_rho, d_epsilon: epsilon_derivative(l, params.epsilon, cfg, delta) }
}

/// Result of one forward/backward evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub trajectory: Trajectory,
    pub violation: f64,
    pub gradient: Gradient,
}

/// Forward pass, violation and adjoint gradient in one call.
pub fn evaluate(
    scenario: &Scenario,
    params: &ControlParams,
    integrator: &IntegratorConfig,
    cfg: &PenaltyConfig,
    delta: f64,
) -> Result<Evaluation> {
    let trajectory = integrate_forward(scenario, params, integrator)?;
    let costate = integrate_costate(scenario, params, &trajectory, cfg)?;
    let gradient = gradient(scenario, params, &trajectory, &costate, cfg, delta);
    let violation = violation(scenario, params, &trajectory);
    Ok(Evaluation { trajectory, violation, gradient })
}

/// Central differences of `f` with a fixed absolute step.
pub fn central_difference<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Finite-difference reference gradient of the three-branch penalty cost.
pub fn fd_gradient_oracle(
    scenario: &Scenario,
    params: &ControlParams,
    integrator: &IntegratorConfig,
    cfg: &PenaltyConfig,
    delta: f64,
    step: f64,
) -> Result<Gradient> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let p = params.segments();
    let cost = |v: &[f64]| -> f64 {
        let Ok(pr) = ControlParams::from_vector(p, v) else { return f64::NAN };
        match integrate_forward(scenario, &pr, integrator) {
            Ok(tr) => crate::penalty::penalty_cost(scenario, &pr, &tr, cfg, delta),
            Err(_) => f64::NAN,
        }
    };
    let g = central_difference(cost, &params.to_vector(), step);
    Ok(Gradient::from_vector(p, &g))
}

/// Per-coordinate disagreement used by the gradient check: zero when the
/// absolute difference is within `abs_floor`, otherwise relative to the
/// larger magnitude.
pub fn relative_error(analytic: f64, reference: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - reference).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / analytic.abs().max(reference.abs())
    }
}

/// Largest [`relative_error`] over all coordinates.
pub fn max_relative_error(analytic: &Gradient, reference: &Gradient, abs_floor: f64) -> f64 {
    analytic
        .to_vector()
        .iter()
        .zip(reference.to_vector())
        .map(|(a, r)| relative_error(*a, r, abs_floor))
        .fold(0.0, f64::max)
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub samples: usize,
    /// Samples whose trajectory intrudes on at least one obstacle.
    pub active_samples: usize,
    pub max_relative_error: f64,
    /// Sample index attaining the maximum.
    pub worst_sample: usize,
}

/// Compares the adjoint gradient with central differences at `samples`
/// seeded random decision vectors around straight flight to the goal:
/// headings within 0.6 rad of the goal bearing, vertical rates within 0.5 of
/// the straight climb (clipped to the bound), durations in
/// `[0.8, 1.2] * t_hint` and slack in `[1e-3, 0.1]`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    scenario: &Scenario,
    integrator: &IntegratorConfig,
    cfg: &PenaltyConfig,
    delta: f64,
    samples: usize,
    seed: u64,
    step: f64,
    abs_floor: f64,
) -> Result<GradientCheck> {
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = scenario.segments;
    let d = scenario.goal - scenario.start;
    let bearing = d.y.atan2(d.x);
    let climb = if d.planar_norm() > 0.0 { d.z * scenario.v_xy / d.planar_norm() } else { 0.0 };
    let hmax = scenario.hdot_max;
    let mut out = GradientCheck { samples, active_samples: 0, max_relative_error: 0.0, worst_sample: 0 };
    for i in 0..samples {
        let sigma = (0..p)
            .map(|_| {
                ControlValue::new(
                    bearing + rng.random_range(-0.6..0.6),
                    (climb + rng.random_range(-0.5..0.5)).clamp(-hmax, hmax),
                )
            })
            .collect();
        let rho = (0..p).map(|_| scenario.t_hint * rng.random_range(0.8..1.2)).collect();
        let params = ControlParams::new(sigma, rho, rng.random_range(1e-3..0.1))?;
        let ev = evaluate(scenario, &params, integrator, cfg, delta)?;
        if ev.trajectory.clearances.iter().flatten().flatten().any(|m| *m < 0.0) {
            out.active_samples += 1;
        }
        let fd = fd_gradient_oracle(scenario, &params, integrator, cfg, delta, step)?;
        let err = max_relative_error(&ev.gradient, &fd, abs_floor);
        if err > out.max_relative_error {
            out.max_relative_error = err;
            out.worst_sample = i;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Curve, ObstacleTrajectory};
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn scenario(p: usize, obstacles: Vec<ObstacleTrajectory>) -> Scenario {
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

    #[test]
    fn oracle_self_test_on_quadratic() {
        let x = [0.3, -1.2, 2.5, 0.0];
        let g = central_difference(|v| v.iter().map(|a| a * a).sum(), &x, 1e-6);
        for (gi, xi) in g.iter().zip(x) {
            assert!((gi - 2.0 * xi).abs() < 1e-8);
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let cfg = PenaltyConfig::default();
        let sc = scenario(1, vec![]);
        let u = ControlValue::new(0.0, 0.0);
        assert_eq!(hamiltonian_h0(&sc, 0.5, State::ZERO, u, 2.0, State::ZERO, 0.1, &cfg), 0.0);
        let h = hamiltonian_h0(&sc, 0.5, State::ZERO, u, 2.0, State::new(1.0, 0.0, 0.0), 0.1, &cfg);
        assert_eq!(h, 2.0);

        let obs = ObstacleTrajectory::single(Curve::Constant(State::ZERO), 0.0, 10.0, 0.1).unwrap();
        let sc = scenario(1, vec![obs]);
        let h = hamiltonian_h0(&sc, 0.5, State::ZERO, u, 1.0, State::ZERO, 1.0, &cfg);
        assert!((h - 1.6e-3).abs() < 1e-15);
    }

    #[test]
    fn costate_constant_without_obstacles() {
        let cfg = PenaltyConfig::default();
        let sc = scenario(3, vec![]);
        let pr = ControlParams::uniform(3, ControlValue::new(0.5, 0.2), 1.3, 0.05);
        let tr = integrate_forward(&sc, &pr, &IntegratorConfig::default()).unwrap();
        let co = integrate_costate(&sc, &pr, &tr, &cfg).unwrap();
        let terminal = (tr.terminal() - sc.goal) * (2.0 / 0.05);
        for smp in &co.samples {
            assert!((smp.lambda - terminal).norm() < 1e-12);
            assert_eq!(smp.mu, 0.0);
        }
    }

    #[test]
    fn straight_optimum_has_horizon_only_gradient() {
        let cfg = PenaltyConfig::default();
        let sc = scenario(4, vec![]);
        let pr = ControlParams::uniform(4, ControlValue::new(FRAC_PI_4, 1.0 / SQRT_2), SQRT_2, 0.05);
        let ev = evaluate(&sc, &pr, &IntegratorConfig::default(), &cfg, 10.0).unwrap();
        for (dt, dh) in &ev.gradient.d_sigma {
            assert!(dt.abs() < 1e-10 && dh.abs() < 1e-10);
        }
        for d in &ev.gradient.d_rho {
            assert!((d - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn costate_varies_only_on_active_arc() {
        let cfg = PenaltyConfig::default();
        let obs = ObstacleTrajectory::single(Curve::Constant(State::new(0.5, 0.5, 0.45)), 0.0, 10.0, 0.1)
            .unwrap();
        let sc = scenario(2, vec![obs]);
        let pr = ControlParams::uniform(2, ControlValue::new(FRAC_PI_4, 0.6), 1.5, 0.05);
        let tr = integrate_forward(&sc, &pr, &IntegratorConfig::default()).unwrap();
        let co = integrate_costate(&sc, &pr, &tr, &cfg).unwrap();
        for j in 0..co.samples.len() - 1 {
            let active = [j, j + 1].iter().any(|&i| tr.clearances[0][i].is_some_and(|m| m < 0.0));
            let moved = (co.samples[j].lambda - co.samples[j + 1].lambda).norm() > 0.0;
            assert_eq!(active, moved, "sample {j}");
        }
        assert!(tr.clearances[0].iter().flatten().any(|m| *m < 0.0));
    }

    #[test]
    fn matches_finite_differences_with_moving_obstacle() {
        let cfg = PenaltyConfig::default();
        let line = Curve::Line { origin: State::ZERO, velocity: State::new(1.0, 1.0, 1.0) };
        let obs = ObstacleTrajectory::single(line, 0.1, 4.0, 0.1).unwrap();
        let sc = scenario(3, vec![obs]);
        let pr = ControlParams::new(
            vec![
                ControlValue::new(0.9, 0.3),
                ControlValue::new(0.6, 0.9),
                ControlValue::new(0.7, 0.5),
            ],
            vec![1.4, 1.6, 1.5],
            0.02,
        )
        .unwrap();
        let integ = IntegratorConfig::default();
        let ev = evaluate(&sc, &pr, &integ, &cfg, 50.0).unwrap();
        assert!(ev.trajectory.clearances[0].iter().flatten().any(|m| *m < 0.0));
        let fd = fd_gradient_oracle(&sc, &pr, &integ, &cfg, 50.0, 1e-6).unwrap();
        let err = max_relative_error(&ev.gradient, &fd, 1e-6);
        assert!(err < 1e-5, "max rel err {err}\n{:?}\n{:?}", ev.gradient, fd);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-7, 5e-7, 1e-6), 0.0);
        assert!((relative_error(1.0, 1.001, 1e-6) - 0.001 / 1.001).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_bad_step() {
        let sc = scenario(1, vec![]);
        let pr = ControlParams::uniform(1, ControlValue::new(0.0, 0.0), 1.0, 0.05);
        let r = fd_gradient_oracle(&sc, &pr, &IntegratorConfig::default(), &PenaltyConfig::default(), 10.0, 0.0);
        assert!(r.is_err());
    }
}
