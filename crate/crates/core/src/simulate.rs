//! Forward integration of the rescaled state equation on `s in [0, 1]`.

use crate::error::{Error, Result};
use crate::model::{clearance, dynamics_rhs, ControlValue, Scenario, State};
use crate::parametrization::ControlParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegratorConfig {
    /// Fixed RK4 steps per control segment.
    pub steps_per_segment: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { steps_per_segment: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub s: f64,
    pub t: f64,
    pub state: State,
    /// Zero-based segment that owns this sample (right-continuous at grid points).
    pub segment: usize,
    pub control: ControlValue,
}

/// Sampled rescaled trajectory `H(s)` together with `t(s)` and the
/// per-obstacle squared clearance margins.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// `clearances[i][j]`: squared margin against obstacle `i` at sample `j`,
    /// `None` when the obstacle is out of its domain.
    pub clearances: Vec<Vec<Option<f64>>>,
    /// Sample index of each grid point `k/p`, `k = 0..=p`.
    pub segment_bounds: Vec<usize>,
    pub steps_per_segment: usize,
}

impl Trajectory {
    pub fn terminal(&self) -> State {
        self.samples[self.samples.len() - 1].state
    }

    pub fn segments(&self) -> usize {
        self.segment_bounds.len() - 1
    }

    /// Samples of zero-based segment `k`, both endpoints included.
    pub fn segment_samples(&self, k: usize) -> &[Sample] {
        &self.samples[self.segment_bounds[k]..=self.segment_bounds[k + 1]]
    }

    /// Smallest signed distance margin `|H - H_i| - max(R, R_i)` in meters
    /// over all samples and obstacles, if any obstacle was ever active.
    pub fn min_clearance_distance(&self, scenario: &Scenario) -> Option<f64> {
        let mut min: Option<f64> = None;
        for (obs, series) in scenario.obstacles.iter().zip(&self.clearances) {
            let r = scenario.safety_radius.max(obs.safety_radius());
            for c in series.iter().flatten() {
                let d = (c + r * r).max(0.0).sqrt() - r;
                min = Some(min.map_or(d, |m: f64| m.min(d)));
            }
        }
        min
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(rhs: F, s: f64, h: f64, y: State) -> State
where
    F: Fn(f64, State) -> State,
{
    let k1 = rhs(s, y);
    let k2 = rhs(s + 0.5 * h, y + k1 * (0.5 * h));
    let k3 = rhs(s + 0.5 * h, y + k2 * (0.5 * h));
    let k4 = rhs(s + h, y + k3 * h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates `dH/ds = rho_k f(H, sigma_k)` from `H(0) = start` with steps
/// aligned to the segment grid.
pub fn integrate_forward(
    scenario: &Scenario,
    params: &ControlParams,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let p = params.segments();
    if p != scenario.segments {
        return Err(Error::InvalidParams(format!(
            "params have {p} segments, scenario expects {}",
            scenario.segments
        )));
    }
    if cfg.steps_per_segment == 0 {
        return Err(Error::InvalidConfig("steps_per_segment must be at least 1".into()));
    }
    let n = cfg.steps_per_segment;
    let pf = p as f64;
    let h = 1.0 / (pf * n as f64);

    let mut samples = Vec::with_capacity(p * n + 1);
    let mut segment_bounds = Vec::with_capacity(p + 1);
    let mut state = scenario.start;
    samples.push(Sample {
        s: 0.0,
        t: 0.0,
        state,
        segment: 0,
        control: params.sigma[0],
    });
    segment_bounds.push(0);

    for k in 0..p {
        let rate = dynamics_rhs(params.sigma[k], scenario.v_xy) * params.rho[k];
        let rhs = |_s: f64, _y: State| rate;
        for j in 0..n {
            let s0 = (k as f64 + j as f64 / n as f64) / pf;
            state = rk4_step(rhs, s0, h, state);
            let s = if j + 1 == n { (k + 1) as f64 / pf } else { (k as f64 + (j + 1) as f64 / n as f64) / pf };
            let s = s.min(1.0);
            if !state.is_finite() {
                return Err(Error::NonfiniteState { s });
            }
            let segment = if j + 1 == n { (k + 1).min(p - 1) } else { k };
            samples.push(Sample {
                s,
                t: params.time_at(s),
                state,
                segment,
                control: params.sigma[segment],
            });
        }
        segment_bounds.push(samples.len() - 1);
    }

    let clearances = scenario
        .obstacles
        .iter()
        .map(|obs| {
            samples
                .iter()
                .map(|smp| clearance(smp.state, obs, smp.t, scenario.safety_radius))
                .collect()
        })
        .collect();

    Ok(Trajectory { samples, clearances, segment_bounds, steps_per_segment: n })
}

/// Sum of planar chord lengths between consecutive samples.
pub fn path_length_xy(traj: &Trajectory) -> f64 {
    traj.samples
        .windows(2)
        .map(|w| (w[1].state - w[0].state).planar_norm())
        .sum()
}
