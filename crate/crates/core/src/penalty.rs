//! Exact penalty cost and the constraint-violation functional.
//!
//! The violation `L` integrates the squared clearance deficits of every active
//! obstacle, weighted by the segment slope `rho_k`, and adds the squared
//! terminal miss `|H(1) - goal|^2`. The cost is
//!
//! ```text
//! J = sum(rho)/p                              eps = 0, L = 0
//! J = sum(rho)/p + eps^-alpha L + delta eps^beta   eps > 0
//! J = +inf                                    eps = 0, L != 0
//! ```
//!
//! with "eps = 0" meaning `eps <= eps_min` and "L = 0" meaning `L <= violation_tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dynamics_rhs, ObstacleTrajectory, Scenario, State};
use crate::parametrization::ControlParams;
use crate::simulate::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_delta_schedule")]
    pub delta_schedule: Vec<f64>,
    #[serde(default = "default_eps_bar")]
    pub eps_bar: f64,
    #[serde(default = "default_eps_min")]
    pub eps_min: f64,
    #[serde(default = "default_violation_tol")]
    pub violation_tol: f64,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    1.0
}
fn default_delta_schedule() -> Vec<f64> {
    (1..=6).map(|e| 10f64.powi(e)).collect()
}
fn default_eps_bar() -> f64 {
    0.1
}
fn default_eps_min() -> f64 {
    1e-9
}
fn default_violation_tol() -> f64 {
    1e-6
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            delta_schedule: default_delta_schedule(),
            eps_bar: default_eps_bar(),
            eps_min: default_eps_min(),
            violation_tol: default_violation_tol(),
        }
    }
}

impl PenaltyConfig {
    /// Geometric schedule `start * 10^k`, `k = 0..stages`.
    pub fn geometric_schedule(start: f64, stages: usize) -> Vec<f64> {
        (0..stages).map(|k| start * 10f64.powi(k as i32)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta <= self.alpha) {
            return bad(format!("need 0 < beta <= alpha, got beta = {}", self.beta));
        }
        if self.delta_schedule.is_empty() {
            return bad("delta_schedule is empty".into());
        }
        if self.delta_schedule.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("delta_schedule entries must be positive".into());
        }
        if self.delta_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("delta_schedule must be strictly increasing".into());
        }
        if !(self.eps_min > 0.0 && self.eps_min < self.eps_bar && self.eps_bar.is_finite()) {
            return bad(format!(
                "need 0 < eps_min < eps_bar, got eps_min = {}, eps_bar = {}",
                self.eps_min, self.eps_bar
            ));
        }
        if !(self.violation_tol > 0.0) {
            return bad("violation_tol must be positive".into());
        }
        Ok(())
    }
}

/// Integrand `max(-margin, 0)^2` for a squared clearance margin.
#[inline]
pub fn deficit_sq(margin: Option<f64>) -> f64 {
    match margin {
        Some(m) if m < 0.0 => m * m,
        _ => 0.0,
    }
}

/// Squared deficit against one obstacle at `(state, t)` with its partials in
/// `state` and `t`. Zero when the obstacle is absent or cleared.
pub(crate) fn point_deficit(
    scenario: &Scenario,
    obs: &ObstacleTrajectory,
    state: State,
    t: f64,
) -> (f64, State, f64) {
    let Some(pos) = obs.position(t) else { return (0.0, State::ZERO, 0.0) };
    let r = scenario.safety_radius.max(obs.safety_radius());
    let diff = state - pos;
    let margin = diff.norm_sq() - r * r;
    if margin >= 0.0 {
        return (0.0, State::ZERO, 0.0);
    }
    let vel = obs.velocity(t).unwrap_or(State::ZERO);
    (margin * margin, diff * (4.0 * margin), -4.0 * margin * diff.dot(vel))
}

/// Partials of one quadrature interval with respect to its end nodes and the
/// (constant) flight velocity on it.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct IntervalPartials {
    pub d_state_lo: State,
    pub d_t_lo: f64,
    pub d_state_hi: State,
    pub d_t_hi: f64,
    pub d_velocity: State,
}

/// Trapezoid in physical time of the summed squared deficits over one
/// sample interval `[(h_lo, t_lo), (h_hi, t_hi)]` flown at `velocity`.
///
/// An obstacle's domain boundary inside the interval becomes an extra node,
/// with the airplane position there interpolated along the straight leg, so
/// the value stays continuous as sample times cross the boundary.
pub(crate) fn interval_deficit(
    scenario: &Scenario,
    (h_lo, t_lo): (State, f64),
    (h_hi, t_hi): (State, f64),
    velocity: State,
) -> (f64, IntervalPartials) {
    let mut value = 0.0;
    let mut d = IntervalPartials::default();
    for obs in &scenario.obstacles {
        let (w_lo, w_hi) = obs.active_window();
        let a = t_lo.max(w_lo);
        let b = t_hi.min(w_hi);
        if !(b > a) {
            continue;
        }
        let a_is_node = a == t_lo;
        let b_is_node = b == t_hi;
        let ha = if a_is_node { h_lo } else { h_lo + velocity * (a - t_lo) };
        let hb = if b_is_node { h_hi } else { h_lo + velocity * (b - t_lo) };
        let (ga, ga_h, ga_t) = point_deficit(scenario, obs, ha, a);
        let (gb, gb_h, gb_t) = point_deficit(scenario, obs, hb, b);
        if ga == 0.0 && gb == 0.0 {
            continue;
        }
        let half = 0.5 * (b - a);
        let sum = ga + gb;
        value += half * sum;

        let dha = ga_h * half;
        let dhb = gb_h * half;
        if a_is_node {
            d.d_state_lo += dha;
            d.d_t_lo += -0.5 * sum + half * ga_t;
        } else {
            d.d_state_lo += dha;
            d.d_t_lo -= dha.dot(velocity);
            d.d_velocity += dha * (a - t_lo);
        }
        if b_is_node {
            d.d_state_hi += dhb;
            d.d_t_hi += 0.5 * sum + half * gb_t;
        } else {
            d.d_state_lo += dhb;
            d.d_t_lo -= dhb.dot(velocity);
            d.d_velocity += dhb * (b - t_lo);
        }
    }
    (value, d)
}

/// Obstacle part of the violation functional: `int g dt = sum_k int rho_k g ds`.
pub fn obstacle_violation(
    scenario: &Scenario,
    params: &ControlParams,
    traj: &Trajectory,
) -> f64 {
    let n = traj.steps_per_segment;
    let mut total = 0.0;
    for (j, pair) in traj.samples.windows(2).enumerate() {
        let velocity = dynamics_rhs(params.sigma[j / n], scenario.v_xy);
        let (v, _) = interval_deficit(
            scenario,
            (pair[0].state, pair[0].t),
            (pair[1].state, pair[1].t),
            velocity,
        );
        total += v;
    }
    total
}

/// Squared terminal miss `|H(1) - goal|^2`.
pub fn terminal_violation(scenario: &Scenario, traj: &Trajectory) -> f64 {
    (traj.terminal() - scenario.goal).norm_sq()
}

/// Constraint violation `L >= 0`.
pub fn violation(scenario: &Scenario, params: &ControlParams, traj: &Trajectory) -> f64 {
    obstacle_violation(scenario, params, traj) + terminal_violation(scenario, traj)
}

/// Branch-2 expression `T + eps^-alpha L + delta eps^beta`, evaluated for any
/// `eps > 0`. This is the continuous extension the optimizer works with.
pub fn smooth_cost(horizon: f64, violation: f64, epsilon: f64, cfg: &PenaltyConfig, delta: f64) -> f64 {
    horizon + epsilon.powf(-cfg.alpha) * violation + delta * epsilon.powf(cfg.beta)
}

/// Exact penalty cost with all three branches.
pub fn penalty_cost_from(
    horizon: f64,
    violation: f64,
    epsilon: f64,
    cfg: &PenaltyConfig,
    delta: f64,
) -> f64 {
    if epsilon <= cfg.eps_min {
        if violation <= cfg.violation_tol {
            horizon
        } else {
            f64::INFINITY
        }
    } else {
        smooth_cost(horizon, violation, epsilon, cfg, delta)
    }
}

pub fn penalty_cost(
    scenario: &Scenario,
    params: &ControlParams,
    traj: &Trajectory,
    cfg: &PenaltyConfig,
    delta: f64,
) -> f64 {
    let l = violation(scenario, params, traj);
    penalty_cost_from(params.horizon(), l, params.epsilon, cfg, delta)
}

/// Slack minimizing the branch-2 cost for a fixed violation:
/// `eps* = (alpha L / (beta delta))^(1 / (alpha + beta))`.
pub fn stationary_epsilon(violation: f64, cfg: &PenaltyConfig, delta: f64) -> f64 {
    (cfg.alpha * violation / (cfg.beta * delta)).powf(1.0 / (cfg.alpha + cfg.beta))
}

/// `dJ/d eps` of the branch-2 cost.
pub fn epsilon_derivative(violation: f64, epsilon: f64, cfg: &PenaltyConfig, delta: f64) -> f64 {
    -cfg.alpha * epsilon.powf(-cfg.alpha - 1.0) * violation
        + delta * cfg.beta * epsilon.powf(cfg.beta - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ControlValue, Curve};
    use crate::simulate::{integrate_forward, IntegratorConfig};
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn scenario(obstacles: Vec<ObstacleTrajectory>) -> Scenario {
        Scenario {
            start: State::ZERO,
            goal: State::new(1.0, 1.0, 1.0),
            theta0: None,
            v_xy: 1.0,
            hdot_max: 1.0,
            safety_radius: 0.2,
            obstacles,
            segments: 1,
            t_hint: 1.7,
        }
    }

    fn straight() -> ControlParams {
        ControlParams::uniform(1, ControlValue::new(FRAC_PI_4, 1.0 / SQRT_2), SQRT_2, 0.1)
    }

    #[test]
    fn feasible_path_has_zero_violation() {
        let far = ObstacleTrajectory::single(Curve::Constant(State::new(5.0, 5.0, 5.0)), 0.0, 10.0, 0.1)
            .unwrap();
        let sc = scenario(vec![far]);
        let pr = straight();
        let tr = integrate_forward(&sc, &pr, &IntegratorConfig::default()).unwrap();
        assert!(violation(&sc, &pr, &tr) < 1e-24);
    }

    #[test]
    fn terminal_term_only() {
        let sc = scenario(vec![]);
        let pr = ControlParams::uniform(1, ControlValue::new(FRAC_PI_4, 0.0), SQRT_2, 0.1);
        let tr = integrate_forward(&sc, &pr, &IntegratorConfig::default()).unwrap();
        assert!((violation(&sc, &pr, &tr) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_obstacle_positive_violation() {
        // obstacle flying the same diagonal as the airplane, active from t = 0.1
        let line = Curve::Line { origin: State::ZERO, velocity: State::new(1.0, 1.0, 1.0) * (1.0 / SQRT_2) };
        let obs = ObstacleTrajectory::single(line, 0.1, 3.0, 0.1).unwrap();
        let sc = scenario(vec![obs]);
        let pr = straight();
        let tr = integrate_forward(&sc, &pr, &IntegratorConfig::default()).unwrap();
        let l = obstacle_violation(&sc, &pr, &tr);
        // constant deficit 0.04 over t in [0.1, sqrt 2]; the window start is a node
        let expected = 0.0016 * (SQRT_2 - 0.1);
        assert!(l > 0.0);
        assert!((l - expected).abs() < 1e-12, "{l} vs {expected}");
    }

    #[test]
    fn branch_arithmetic() {
        let cfg = PenaltyConfig::default();
        // rho = [1, 1], p = 2 -> T = 1
        assert_eq!(penalty_cost_from(1.0, 0.0, 0.1, &cfg, 50.0), 6.0);
        assert_eq!(penalty_cost_from(1.0, 5e-7, 1e-9, &cfg, 50.0), 1.0);
        assert_eq!(penalty_cost_from(1.0, 1e-3, 1e-9, &cfg, 50.0), f64::INFINITY);
        assert_eq!(penalty_cost_from(1.0, 1e-3, 5e-10, &cfg, 50.0), f64::INFINITY);
    }

    #[test]
    fn stationary_epsilon_closed_form() {
        let cfg = PenaltyConfig::default();
        let (l, d) = (0.02, 50.0);
        let eps = stationary_epsilon(l, &cfg, d);
        assert!((eps - (l / d).sqrt()).abs() < 1e-15);
        assert!(epsilon_derivative(l, eps, &cfg, d).abs() < 1e-9);
        assert!(epsilon_derivative(l, 0.5 * eps, &cfg, d) < 0.0);
        assert!(epsilon_derivative(l, 2.0 * eps, &cfg, d) > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(PenaltyConfig::default().validate().is_ok());
        let c = PenaltyConfig { beta: 2.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = PenaltyConfig { delta_schedule: vec![10.0, 10.0], ..Default::default() };
        assert!(c.validate().is_err());
        let c = PenaltyConfig { eps_min: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        assert_eq!(PenaltyConfig::default().delta_schedule, vec![1e1, 1e2, 1e3, 1e4, 1e5, 1e6]);
        assert_eq!(PenaltyConfig::geometric_schedule(50.0, 3), vec![50.0, 500.0, 5000.0]);
    }
}
