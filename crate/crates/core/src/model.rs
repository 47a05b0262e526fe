//! Dubins airplane kinematics, obstacle trajectories and clearance.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position tolerance for piece junctions of an obstacle trajectory.
pub const JUNCTION_TOL: f64 = 1e-9;

/// A point (or displacement) in 3D space, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State {
    pub const ZERO: State = State { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: State) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn planar_norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for State {
    fn from(v: [f64; 3]) -> Self {
        State::new(v[0], v[1], v[2])
    }
}

impl Add for State {
    type Output = State;
    fn add(self, rhs: State) -> State {
        State::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for State {
    fn add_assign(&mut self, rhs: State) {
        *self = *self + rhs;
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, rhs: State) -> State {
        State::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, rhs: f64) -> State {
        State::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl Neg for State {
    type Output = State;
    fn neg(self) -> State {
        State::new(-self.x, -self.y, -self.z)
    }
}

/// Heading in the xy-plane (radians) and vertical rate (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlValue {
    pub theta: f64,
    pub hdot: f64,
}

impl ControlValue {
    pub const fn new(theta: f64, hdot: f64) -> Self {
        Self { theta, hdot }
    }

    /// Same control with the heading wrapped to (-pi, pi].
    pub fn normalized(self) -> Self {
        Self { theta: wrap_angle(self.theta), hdot: self.hdot }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut w = theta.rem_euclid(two_pi);
    if w > PI {
        w -= two_pi;
    }
    w
}

/// Velocity of the airplane under control `u` at planar speed `v_xy`.
///
/// The kinematics are time-invariant and do not depend on position, so no
/// state argument is taken.
pub fn dynamics_rhs(u: ControlValue, v_xy: f64) -> State {
    let (sin, cos) = u.theta.sin_cos();
    State::new(v_xy * cos, v_xy * sin, u.hdot)
}

/// Partial derivative of [`dynamics_rhs`] with respect to the heading.
pub fn dynamics_dtheta(u: ControlValue, v_xy: f64) -> State {
    let (sin, cos) = u.theta.sin_cos();
    State::new(-v_xy * sin, v_xy * cos, 0.0)
}

/// Partial derivative of [`dynamics_rhs`] with respect to the vertical rate.
pub fn dynamics_dhdot() -> State {
    State::new(0.0, 0.0, 1.0)
}

/// Closed set of analytic curve kinds an obstacle piece can follow.
///
/// All curves are written in absolute time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    /// `origin + velocity * t`
    Line { origin: State, velocity: State },
    /// Linear x and y, sinusoidal altitude `z0 + amplitude * sin(omega * t + phase)`.
    SineAlt {
        x0: f64,
        vx: f64,
        y0: f64,
        vy: f64,
        z0: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `x = center + sign * sqrt(max(a + b t, 0))`, linear y and z.
    SqrtArc {
        center: f64,
        sign: f64,
        a: f64,
        b: f64,
        y0: f64,
        vy: f64,
        z0: f64,
        vz: f64,
    },
    Constant(State),
}

/// Wire names of the curve kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CurveKind {
    Line,
    SineAlt,
    SqrtArc,
    Constant,
}

impl CurveKind {
    pub fn coefficient_count(self) -> usize {
        match self {
            CurveKind::Line => 6,
            CurveKind::SineAlt => 8,
            CurveKind::SqrtArc => 8,
            CurveKind::Constant => 3,
        }
    }
}

impl Curve {
    pub fn kind(&self) -> CurveKind {
        match self {
            Curve::Line { .. } => CurveKind::Line,
            Curve::SineAlt { .. } => CurveKind::SineAlt,
            Curve::SqrtArc { .. } => CurveKind::SqrtArc,
            Curve::Constant(_) => CurveKind::Constant,
        }
    }

    /// Flat coefficient list used by the scenario file format.
    ///
    /// * LINE: `[x0, vx, y0, vy, z0, vz]`
    /// * SINE_ALT: `[x0, vx, y0, vy, z0, amplitude, omega, phase]`
    /// * SQRT_ARC: `[center, sign, a, b, y0, vy, z0, vz]`
    /// * CONSTANT: `[x, y, z]`
    pub fn coefficients(&self) -> Vec<f64> {
        match *self {
            Curve::Line { origin, velocity } => vec![
                origin.x, velocity.x, origin.y, velocity.y, origin.z, velocity.z,
            ],
            Curve::SineAlt { x0, vx, y0, vy, z0, amplitude, omega, phase } => {
                vec![x0, vx, y0, vy, z0, amplitude, omega, phase]
            }
            Curve::SqrtArc { center, sign, a, b, y0, vy, z0, vz } => {
                vec![center, sign, a, b, y0, vy, z0, vz]
            }
            Curve::Constant(p) => vec![p.x, p.y, p.z],
        }
    }

    pub fn from_coefficients(kind: CurveKind, c: &[f64]) -> Result<Self> {
        if c.len() != kind.coefficient_count() {
            return Err(Error::InvalidScenario(format!(
                "{kind:?} expects {} coefficients, got {}",
                kind.coefficient_count(),
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario(format!("{kind:?} coefficients must be finite")));
        }
        Ok(match kind {
            CurveKind::Line => Curve::Line {
                origin: State::new(c[0], c[2], c[4]),
                velocity: State::new(c[1], c[3], c[5]),
            },
            CurveKind::SineAlt => Curve::SineAlt {
                x0: c[0],
                vx: c[1],
                y0: c[2],
                vy: c[3],
                z0: c[4],
                amplitude: c[5],
                omega: c[6],
                phase: c[7],
            },
            CurveKind::SqrtArc => {
                if c[1] != 1.0 && c[1] != -1.0 {
                    return Err(Error::InvalidScenario("SQRT_ARC sign must be +1 or -1".into()));
                }
                Curve::SqrtArc {
                    center: c[0],
                    sign: c[1],
                    a: c[2],
                    b: c[3],
                    y0: c[4],
                    vy: c[5],
                    z0: c[6],
                    vz: c[7],
                }
            }
            CurveKind::Constant => Curve::Constant(State::new(c[0], c[1], c[2])),
        })
    }

    pub fn position(&self, t: f64) -> State {
        match *self {
            Curve::Line { origin, velocity } => origin + velocity * t,
            Curve::SineAlt { x0, vx, y0, vy, z0, amplitude, omega, phase } => State::new(
                x0 + vx * t,
                y0 + vy * t,
                z0 + amplitude * (omega * t + phase).sin(),
            ),
            Curve::SqrtArc { center, sign, a, b, y0, vy, z0, vz } => State::new(
                center + sign * (a + b * t).max(0.0).sqrt(),
                y0 + vy * t,
                z0 + vz * t,
            ),
            Curve::Constant(p) => p,
        }
    }

    /// Time derivative of [`Curve::position`]. Where the square-root radicand
    /// is clamped the x-rate is zero.
    pub fn velocity(&self, t: f64) -> State {
        match *self {
            Curve::Line { velocity, .. } => velocity,
            Curve::SineAlt { vx, vy, amplitude, omega, phase, .. } => {
                State::new(vx, vy, amplitude * omega * (omega * t + phase).cos())
            }
            Curve::SqrtArc { sign, a, b, vy, vz, .. } => {
                let r = a + b * t;
                let dx = if r > 0.0 { sign * b / (2.0 * r.sqrt()) } else { 0.0 };
                State::new(dx, vy, vz)
            }
            Curve::Constant(_) => State::ZERO,
        }
    }
}

/// One time-bounded piece of an obstacle trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub t_lo: f64,
    pub t_hi: f64,
    pub curve: Curve,
}

/// Piecewise analytic obstacle path with its safety radius.
///
/// Pieces are contiguous in time. Before the first piece the obstacle does
/// not exist. After the last piece it either holds its final position
/// (`hold_final`) or disappears.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTrajectory {
    pieces: Vec<Piece>,
    safety_radius: f64,
    hold_final: bool,
}

impl ObstacleTrajectory {
    pub fn new(pieces: Vec<Piece>, safety_radius: f64, hold_final: bool) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidScenario("obstacle needs at least one piece".into()));
        }
        if !(safety_radius > 0.0 && safety_radius.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "obstacle safety radius must be positive, got {safety_radius}"
            )));
        }
        for (i, piece) in pieces.iter().enumerate() {
            if !(piece.t_lo.is_finite() && piece.t_hi.is_finite() && piece.t_lo <= piece.t_hi) {
                return Err(Error::InvalidScenario(format!(
                    "piece {i} has invalid domain [{}, {}]",
                    piece.t_lo, piece.t_hi
                )));
            }
        }
        for (i, pair) in pieces.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if a.t_hi != b.t_lo {
                return Err(Error::InvalidScenario(format!(
                    "pieces {i} and {} are not contiguous ({} vs {})",
                    i + 1,
                    a.t_hi,
                    b.t_lo
                )));
            }
            let gap = (a.curve.position(a.t_hi) - b.curve.position(b.t_lo)).norm();
            if gap > JUNCTION_TOL {
                return Err(Error::InvalidScenario(format!(
                    "pieces {i} and {} disagree by {gap:e} m at t={}",
                    i + 1,
                    a.t_hi
                )));
            }
        }
        Ok(Self { pieces, safety_radius, hold_final })
    }

    /// Single-piece trajectory.
    pub fn single(curve: Curve, t_lo: f64, t_hi: f64, safety_radius: f64) -> Result<Self> {
        Self::new(vec![Piece { t_lo, t_hi, curve }], safety_radius, true)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn safety_radius(&self) -> f64 {
        self.safety_radius
    }

    pub fn hold_final(&self) -> bool {
        self.hold_final
    }

    pub fn domain_start(&self) -> f64 {
        self.pieces[0].t_lo
    }

    pub fn domain_end(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].t_hi
    }

    /// Time window in which the obstacle exists (both ends inclusive).
    pub fn active_window(&self) -> (f64, f64) {
        let end = if self.hold_final { f64::INFINITY } else { self.domain_end() };
        (self.domain_start(), end)
    }

    fn locate(&self, t: f64) -> Option<(&Piece, f64)> {
        if t < self.domain_start() {
            return None;
        }
        let last = &self.pieces[self.pieces.len() - 1];
        if t > last.t_hi {
            return self.hold_final.then_some((last, last.t_hi));
        }
        // A junction time belongs to the later piece.
        let idx = self.pieces.partition_point(|p| p.t_lo <= t).saturating_sub(1);
        Some((&self.pieces[idx], t))
    }

    /// Position at time `t`, or `None` outside the obstacle's domain.
    pub fn position(&self, t: f64) -> Option<State> {
        self.locate(t).map(|(piece, t)| piece.curve.position(t))
    }

    /// Velocity at time `t`; zero while holding the final position.
    pub fn velocity(&self, t: f64) -> Option<State> {
        let (piece, te) = self.locate(t)?;
        Some(if te != t { State::ZERO } else { piece.curve.velocity(t) })
    }
}

/// Convenience wrapper matching [`ObstacleTrajectory::position`].
pub fn obstacle_position(obs: &ObstacleTrajectory, t: f64) -> Option<State> {
    obs.position(t)
}

/// Squared clearance margin `|pos - obstacle(t)|^2 - max(R, R_i)^2`, or `None`
/// while the obstacle is out of its domain.
pub fn clearance(pos: State, obs: &ObstacleTrajectory, t: f64, radius: f64) -> Option<f64> {
    let r = radius.max(obs.safety_radius());
    obs.position(t).map(|o| (pos - o).norm_sq() - r * r)
}

/// Mission definition for one planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub start: State,
    pub goal: State,
    /// Optional pin on the first segment's heading.
    pub theta0: Option<f64>,
    pub v_xy: f64,
    pub hdot_max: f64,
    /// Airplane safety radius.
    pub safety_radius: f64,
    pub obstacles: Vec<ObstacleTrajectory>,
    /// Number of control segments.
    pub segments: usize,
    pub t_hint: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if !self.start.is_finite() || !self.goal.is_finite() {
            return bad("start and goal must be finite".into());
        }
        if !(self.v_xy > 0.0 && self.v_xy.is_finite()) {
            return bad(format!("v_xy must be positive, got {}", self.v_xy));
        }
        if !(self.hdot_max >= 0.0 && self.hdot_max.is_finite()) {
            return bad(format!("hdot_max must be nonnegative, got {}", self.hdot_max));
        }
        if !(self.safety_radius > 0.0 && self.safety_radius.is_finite()) {
            return bad(format!("safety_radius must be positive, got {}", self.safety_radius));
        }
        if self.segments == 0 {
            return bad("segments must be at least 1".into());
        }
        if !(self.t_hint > 0.0 && self.t_hint.is_finite()) {
            return bad(format!("horizon hint must be positive, got {}", self.t_hint));
        }
        if let Some(theta0) = self.theta0 {
            if !theta0.is_finite() {
                return bad("theta0 must be finite".into());
            }
        }
        Ok(())
    }

    /// Planar straight-line distance from start to goal divided by the planar
    /// speed: no path can be faster.
    pub fn kinematic_lower_bound(&self) -> f64 {
        (self.goal - self.start).planar_norm() / self.v_xy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rhs_axis_aligned() {
        let f = dynamics_rhs(ControlValue::new(0.0, 0.0), 1.0);
        assert_eq!(f, State::new(1.0, 0.0, 0.0));
        let f = dynamics_rhs(ControlValue::new(FRAC_PI_2, 0.0), 1.0);
        assert!(close(f.x, 0.0, 1e-15) && close(f.y, 1.0, 1e-15) && f.z == 0.0);
    }

    #[test]
    fn rhs_diagonal() {
        let f = dynamics_rhs(ControlValue::new(FRAC_PI_4, 0.5), 1.0);
        assert!(close(f.x, SQRT_2 / 2.0, 1e-15));
        assert!(close(f.y, SQRT_2 / 2.0, 1e-15));
        assert_eq!(f.z, 0.5);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!(close(wrap_angle(-PI), PI, 1e-15));
        assert!(close(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, 1e-12));
        assert!(close(wrap_angle(7.0), 7.0 - 2.0 * PI, 1e-12));
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn clearance_arithmetic() {
        let obs = ObstacleTrajectory::single(
            Curve::Constant(State::new(1.0, 0.0, 0.0)),
            0.0,
            10.0,
            0.1,
        )
        .unwrap();
        let c = clearance(State::ZERO, &obs, 1.0, 0.2).unwrap();
        assert!(close(c, 0.96, 1e-15));
        let c = clearance(State::new(1.0, 0.0, 0.0), &obs, 1.0, 0.2).unwrap();
        assert!(close(c, -0.04, 1e-15));
        // larger obstacle radius wins
        let c = clearance(State::new(1.0, 0.0, 0.0), &obs, 1.0, 0.05).unwrap();
        assert!(close(c, -0.01, 1e-15));
    }

    #[test]
    fn out_of_domain_is_inactive() {
        let line = Curve::Line { origin: State::ZERO, velocity: State::new(1.0, 1.0, 1.0) };
        let obs = ObstacleTrajectory::new(
            vec![Piece { t_lo: 0.1, t_hi: 1.0, curve: line }],
            0.1,
            false,
        )
        .unwrap();
        assert!(obs.position(0.05).is_none());
        assert!(clearance(State::ZERO, &obs, 0.05, 0.2).is_none());
        assert!(obs.position(1.5).is_none());
        assert_eq!(obs.position(0.5), Some(State::new(0.5, 0.5, 0.5)));
    }

    #[test]
    fn hold_final_freezes_position() {
        let line = Curve::Line { origin: State::ZERO, velocity: State::new(1.0, 0.0, 0.0) };
        let obs = ObstacleTrajectory::single(line, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(obs.position(3.0), Some(State::new(1.0, 0.0, 0.0)));
        assert_eq!(obs.velocity(3.0), Some(State::ZERO));
        assert_eq!(obs.velocity(0.5), Some(State::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn rejects_discontinuous_pieces() {
        let a = Piece { t_lo: 0.0, t_hi: 1.0, curve: Curve::Constant(State::ZERO) };
        let b = Piece { t_lo: 1.0, t_hi: 2.0, curve: Curve::Constant(State::new(1e-6, 0.0, 0.0)) };
        assert!(ObstacleTrajectory::new(vec![a, b], 0.1, true).is_err());
        let gap = Piece { t_lo: 1.5, ..b };
        assert!(ObstacleTrajectory::new(vec![a, gap], 0.1, true).is_err());
        assert!(ObstacleTrajectory::new(vec![a], 0.0, true).is_err());
    }

    #[test]
    fn junction_time_uses_later_piece() {
        let a = Piece {
            t_lo: 0.0,
            t_hi: 1.0,
            curve: Curve::Line { origin: State::ZERO, velocity: State::new(1.0, 0.0, 0.0) },
        };
        let b = Piece { t_lo: 1.0, t_hi: 2.0, curve: Curve::Constant(State::new(1.0, 0.0, 0.0)) };
        let obs = ObstacleTrajectory::new(vec![a, b], 0.1, true).unwrap();
        assert_eq!(obs.velocity(1.0), Some(State::ZERO));
        assert_eq!(obs.velocity(0.999), Some(State::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn curve_velocity_matches_finite_difference() {
        let curves = [
            Curve::Line { origin: State::new(1.0, 2.0, 3.0), velocity: State::new(0.5, -1.0, 2.0) },
            Curve::SineAlt {
                x0: 0.0,
                vx: 1.0,
                y0: 0.0,
                vy: 1.0,
                z0: 0.0,
                amplitude: 1.0,
                omega: PI / 5.0,
                phase: 0.0,
            },
            Curve::SqrtArc {
                center: 0.5,
                sign: -1.0,
                a: 1.75,
                b: -2.0,
                y0: 0.0,
                vy: 1.0,
                z0: 0.0,
                vz: 1.0,
            },
        ];
        let h = 1e-6;
        for c in curves {
            for &t in &[0.2, 0.5, 0.8] {
                let fd = (c.position(t + h) - c.position(t - h)) * (0.5 / h);
                assert!((fd - c.velocity(t)).norm() < 1e-7, "{c:?} at {t}");
            }
        }
    }

    #[test]
    fn coefficients_round_trip() {
        let c = Curve::SqrtArc {
            center: 0.5,
            sign: 1.0,
            a: 1.75,
            b: -2.0,
            y0: 0.0,
            vy: 1.0,
            z0: 0.0,
            vz: 1.0,
        };
        let back = Curve::from_coefficients(c.kind(), &c.coefficients()).unwrap();
        assert_eq!(back, c);
        assert!(Curve::from_coefficients(CurveKind::Line, &[1.0]).is_err());
    }

    #[test]
    fn lower_bound_cases() {
        let mut sc = Scenario {
            start: State::ZERO,
            goal: State::new(1.0, 1.0, 1.0),
            theta0: None,
            v_xy: 1.0,
            hdot_max: 1.0,
            safety_radius: 0.2,
            obstacles: vec![],
            segments: 4,
            t_hint: 1.0,
        };
        assert!(close(sc.kinematic_lower_bound(), SQRT_2, 1e-15));
        sc.goal = State::ZERO;
        assert_eq!(sc.kinematic_lower_bound(), 0.0);
        sc.goal = State::new(3.0, 4.0, 0.0);
        sc.v_xy = 5.0;
        assert_eq!(sc.kinematic_lower_bound(), 1.0);
    }

    #[test]
    fn scenario_validation() {
        let sc = Scenario {
            start: State::ZERO,
            goal: State::new(1.0, 1.0, 1.0),
            theta0: None,
            v_xy: 1.0,
            hdot_max: 1.0,
            safety_radius: 0.2,
            obstacles: vec![],
            segments: 4,
            t_hint: 1.0,
        };
        assert!(sc.validate().is_ok());
        assert!(Scenario { v_xy: 0.0, ..sc.clone() }.validate().is_err());
        assert!(Scenario { segments: 0, ..sc.clone() }.validate().is_err());
        assert!(Scenario { safety_radius: -1.0, ..sc.clone() }.validate().is_err());
        assert!(Scenario { t_hint: 0.0, ..sc }.validate().is_err());
    }
}
