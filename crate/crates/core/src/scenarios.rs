//! Built-in scenarios: three missions from (0,0,0) to (1,1,1) past two moving
//! obstacles.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::model::{Curve, ObstacleTrajectory, Piece, Scenario, State};
use crate::penalty::PenaltyConfig;

pub const PRESET_NAMES: [&str; 3] = ["example1", "example2", "example3"];

/// Control segments used by the presets.
pub const PRESET_SEGMENTS: usize = 10;

const AIRPLANE_RADIUS: f64 = 0.2;
const OBSTACLE_RADIUS: f64 = 0.1;
const OBSTACLE_START: f64 = 0.1;
const DELTA_STAGES: usize = 6;

#[derive(Debug, Clone)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub description: &'static str,
    pub scenario: Scenario,
    pub penalty: PenaltyConfig,
    /// Reported optimal flight time for this mission.
    pub reference_t: f64,
    /// Reported penalty parameter; the preset schedule starts here.
    pub reference_delta: f64,
}

fn base_scenario(obstacles: Vec<ObstacleTrajectory>) -> Scenario {
    let mut sc = Scenario {
        start: State::ZERO,
        goal: State::new(1.0, 1.0, 1.0),
        theta0: None,
        v_xy: 1.0,
        hdot_max: 1.0,
        safety_radius: AIRPLANE_RADIUS,
        obstacles,
        segments: PRESET_SEGMENTS,
        t_hint: 1.0,
    };
    sc.t_hint = 1.2 * sc.kinematic_lower_bound();
    sc
}

/// Obstacles stay active until this time and then hold position.
pub fn obstacle_window_end(t_hint: f64) -> f64 {
    (2.0 * t_hint).max(2.0)
}

fn window_end() -> f64 {
    obstacle_window_end(1.2 * SQRT_2)
}

/// `(t, t, sin(pi t / 5))` from `t = 1/10`.
fn sine_diagonal() -> ObstacleTrajectory {
    let curve = Curve::SineAlt {
        x0: 0.0,
        vx: 1.0,
        y0: 0.0,
        vy: 1.0,
        z0: 0.0,
        amplitude: 1.0,
        omega: PI / 5.0,
        phase: 0.0,
    };
    ObstacleTrajectory::single(curve, OBSTACLE_START, window_end(), OBSTACLE_RADIUS)
        .expect("valid preset obstacle")
}

/// `(1/2 -+ sqrt(3/4 - 2(t - 1/2)), t, t)`: the minus branch until the
/// radicand vanishes at `t = 7/8`, then the plus branch, which the radicand
/// clamp keeps at `x = 1/2`.
fn sqrt_arc() -> ObstacleTrajectory {
    let arc = |sign| Curve::SqrtArc {
        center: 0.5,
        sign,
        a: 1.75,
        b: -2.0,
        y0: 0.0,
        vy: 1.0,
        z0: 0.0,
        vz: 1.0,
    };
    let junction = 0.875;
    ObstacleTrajectory::new(
        vec![
            Piece { t_lo: OBSTACLE_START, t_hi: junction, curve: arc(-1.0) },
            Piece { t_lo: junction, t_hi: window_end(), curve: arc(1.0) },
        ],
        OBSTACLE_RADIUS,
        true,
    )
    .expect("valid preset obstacle")
}

fn line(origin: State, velocity: State) -> ObstacleTrajectory {
    ObstacleTrajectory::single(
        Curve::Line { origin, velocity },
        OBSTACLE_START,
        window_end(),
        OBSTACLE_RADIUS,
    )
    .expect("valid preset obstacle")
}

fn build(
    name: &'static str,
    description: &'static str,
    obstacles: Vec<ObstacleTrajectory>,
    reference_t: f64,
    reference_delta: f64,
) -> ScenarioPreset {
    ScenarioPreset {
        name,
        description,
        scenario: base_scenario(obstacles),
        penalty: PenaltyConfig {
            delta_schedule: PenaltyConfig::geometric_schedule(reference_delta, DELTA_STAGES),
            ..PenaltyConfig::default()
        },
        reference_t,
        reference_delta,
    }
}

/// Looks up a built-in scenario by name.
pub fn preset(name: &str) -> Result<ScenarioPreset> {
    let diagonal = State::new(1.0, 1.0, 1.0);
    match name {
        "example1" => Ok(build(
            "example1",
            "obstacles away from the direct path",
            vec![sine_diagonal(), sqrt_arc()],
            1.4159,
            50.0,
        )),
        "example2" => Ok(build(
            "example2",
            "one obstacle flies the direct path",
            vec![sine_diagonal(), line(State::ZERO, diagonal)],
            1.7058,
            50.0,
        )),
        "example3" => Ok(build(
            "example3",
            "two straight obstacles converging on the goal",
            vec![line(State::ZERO, diagonal), line(State::new(0.0, 0.0, 2.0), State::new(1.0, 1.0, -1.0))],
            1.7059,
            10.0,
        )),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

pub fn presets() -> Vec<ScenarioPreset> {
    PRESET_NAMES.iter().map(|n| preset(n).expect("known preset")).collect()
}

/// `sqrt((x1-x0)^2 + (y1-y0)^2) / v_xy`.
pub fn kinematic_lower_bound(scenario: &Scenario) -> f64 {
    scenario.kinematic_lower_bound()
}
