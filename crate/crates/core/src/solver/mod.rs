//! Exact-penalty outer loop over the `delta` schedule with a projected
//! quasi-Newton inner solve, run from several starting points.

pub mod projected_lbfgs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::evaluate;
use crate::error::{Error, Result};
use crate::model::{ControlValue, Scenario};
use crate::parametrization::{ControlParams, RHO_MIN};
use crate::penalty::{smooth_cost, violation, PenaltyConfig};
use crate::simulate::{integrate_forward, IntegratorConfig, Trajectory};

pub use projected_lbfgs::{BoxBounds, InnerOutcome, InnerStatus, LbfgsSettings, Objective};

/// Initial penalty slack of every start.
pub const INITIAL_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_inner_iters")]
    pub max_inner_iters: usize,
    /// Largest accepted distance between `H(1)` and the goal, meters.
    #[serde(default = "default_terminal_tol")]
    pub terminal_tol: f64,
    /// Largest accepted intrusion into a safety region, meters.
    #[serde(default = "default_clearance_tol")]
    pub clearance_tol: f64,
}

fn default_grad_tol() -> f64 {
    1e-6
}
fn default_max_inner_iters() -> usize {
    500
}
fn default_terminal_tol() -> f64 {
    1e-3
}
fn default_clearance_tol() -> f64 {
    1e-3
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            grad_tol: default_grad_tol(),
            max_inner_iters: default_max_inner_iters(),
            terminal_tol: default_terminal_tol(),
            clearance_tol: default_clearance_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_multistart")]
    pub multistart: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_backtrack")]
    pub backtrack: f64,
    #[serde(default = "default_sufficient_decrease")]
    pub sufficient_decrease: f64,
    #[serde(default = "default_memory")]
    pub memory: usize,
    #[serde(default = "default_steps_per_segment")]
    pub steps_per_segment: usize,
    /// Half-width of the uniform heading perturbation for extra starts, radians.
    #[serde(default = "default_heading_spread")]
    pub heading_spread: f64,
    /// Half-width of the uniform vertical-rate perturbation, m/s.
    #[serde(default = "default_hdot_spread")]
    pub hdot_spread: f64,
}

fn default_multistart() -> usize {
    8
}
fn default_backtrack() -> f64 {
    0.5
}
fn default_sufficient_decrease() -> f64 {
    1e-4
}
fn default_memory() -> usize {
    10
}
fn default_steps_per_segment() -> usize {
    20
}
fn default_heading_spread() -> f64 {
    1.0
}
fn default_hdot_spread() -> f64 {
    0.5
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            multistart: default_multistart(),
            tolerances: Tolerances::default(),
            backtrack: default_backtrack(),
            sufficient_decrease: default_sufficient_decrease(),
            memory: default_memory(),
            steps_per_segment: default_steps_per_segment(),
            heading_spread: default_heading_spread(),
            hdot_spread: default_hdot_spread(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let t = &self.tolerances;
        if self.multistart == 0 {
            return bad("multistart must be at least 1");
        }
        if !(t.grad_tol > 0.0 && t.terminal_tol > 0.0 && t.clearance_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if t.max_inner_iters == 0 {
            return bad("max_inner_iters must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack factor must lie in (0, 1)");
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return bad("sufficient_decrease must lie in (0, 1)");
        }
        if self.memory == 0 || self.steps_per_segment == 0 {
            return bad("memory and steps_per_segment must be positive");
        }
        if !(self.heading_spread >= 0.0 && self.hdot_spread >= 0.0) {
            return bad("perturbation spreads must be nonnegative");
        }
        Ok(())
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { steps_per_segment: self.steps_per_segment }
    }

    fn lbfgs(&self) -> LbfgsSettings {
        LbfgsSettings {
            memory: self.memory,
            max_iterations: self.tolerances.max_inner_iters,
            grad_tol: self.tolerances.grad_tol,
            backtrack: self.backtrack,
            sufficient_decrease: self.sufficient_decrease,
            ..LbfgsSettings::default()
        }
    }
}

/// The inner problem at fixed `delta` in solver coordinates
/// `[theta.., hdot.., rho.., ln eps]`.
///
/// The slack enters through its logarithm: near feasibility the optimal
/// slack shrinks by orders of magnitude and the cost curvature in `eps`
/// grows like `eps^-3`.
struct InnerProblem<'a> {
    scenario: &'a Scenario,
    penalty: &'a PenaltyConfig,
    integrator: IntegratorConfig,
    delta: f64,
}

impl InnerProblem<'_> {
    fn p(&self) -> usize {
        self.scenario.segments
    }

    fn params(&self, z: &[f64]) -> ControlParams {
        let p = self.p();
        ControlParams {
            sigma: (0..p).map(|k| ControlValue::new(z[k], z[p + k])).collect(),
            rho: z[2 * p..3 * p].to_vec(),
            epsilon: z[3 * p].exp(),
        }
    }

    fn encode(&self, params: &ControlParams) -> Vec<f64> {
        let mut z = params.to_vector();
        let last = z.len() - 1;
        z[last] = z[last].ln();
        z
    }

    fn bounds(&self) -> BoxBounds {
        let p = self.p();
        let sc = self.scenario;
        let mut b = BoxBounds::unbounded(3 * p + 1);
        for k in 0..p {
            b.periodic[k] = true;
            b.lower[p + k] = -sc.hdot_max;
            b.upper[p + k] = sc.hdot_max;
            b.lower[2 * p + k] = RHO_MIN;
        }
        if let Some(theta0) = sc.theta0 {
            b.periodic[0] = false;
            b.lower[0] = theta0;
            b.upper[0] = theta0;
        }
        b.lower[3 * p] = self.penalty.eps_min.ln();
        b.upper[3 * p] = self.penalty.eps_bar.ln();
        b
    }
}

impl Objective for InnerProblem<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let params = self.params(z);
        match integrate_forward(self.scenario, &params, &self.integrator) {
            Ok(traj) => {
                let l = violation(self.scenario, &params, &traj);
                smooth_cost(params.horizon(), l, params.epsilon, self.penalty, self.delta)
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let params = self.params(z);
        match evaluate(self.scenario, &params, &self.integrator, self.penalty, self.delta) {
            Ok(ev) => {
                let f = smooth_cost(params.horizon(), ev.violation, params.epsilon, self.penalty, self.delta);
                let mut g = ev.gradient.to_vector();
                let last = g.len() - 1;
                g[last] *= params.epsilon;
                (f, g)
            }
            Err(_) => (f64::INFINITY, vec![0.0; z.len()]),
        }
    }
}

/// Result of one inner minimization at fixed `delta`.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub params: ControlParams,
    /// Branch-2 cost at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub status: InnerStatus,
}

impl InnerSolve {
    /// Set when no step satisfied sufficient decrease; `params` is the best
    /// point found.
    pub fn line_search_stalled(&self) -> bool {
        self.status == InnerStatus::LineSearchStall
    }
}

/// Minimizes the penalty cost at fixed `delta` from `start`, keeping every
/// iterate inside the bounds: `rho_k >= RHO_MIN`, `|hdot_k| <= hdot_max`,
/// `eps in [eps_min, eps_bar]`, headings wrapped to `(-pi, pi]` (or pinned).
pub fn minimize_inner(
    scenario: &Scenario,
    start: &ControlParams,
    penalty: &PenaltyConfig,
    cfg: &SolverConfig,
    delta: f64,
) -> Result<InnerSolve> {
    start.validate()?;
    if start.segments() != scenario.segments {
        return Err(Error::InvalidParams("start does not match scenario segments".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("delta must be positive, got {delta}")));
    }
    let problem = InnerProblem { scenario, penalty, integrator: cfg.integrator(), delta };
    let mut start = start.clone();
    start.epsilon = start.epsilon.clamp(penalty.eps_min, penalty.eps_bar);
    let z0 = problem.encode(&start);
    let out = projected_lbfgs::minimize(&problem, &z0, &problem.bounds(), &cfg.lbfgs());
    let mut params = problem.params(&out.x);
    // exp(ln eps) may round just outside the box
    params.epsilon = params.epsilon.clamp(penalty.eps_min, penalty.eps_bar);
    Ok(InnerSolve {
        params,
        cost: out.value,
        iterations: out.iterations,
        projected_gradient_norm: out.projected_gradient_norm,
        status: out.status,
    })
}

/// Nominal start: constant heading toward the goal, vertical rate that
/// matches the climb over the planar distance, `rho_k = T_hint`.
pub fn nominal_start(scenario: &Scenario) -> ControlParams {
    let d = scenario.goal - scenario.start;
    let planar = d.planar_norm();
    let theta = d.y.atan2(d.x);
    let hdot = if planar > 0.0 {
        d.z * scenario.v_xy / planar
    } else {
        d.z.signum() * scenario.hdot_max
    };
    let hdot = hdot.clamp(-scenario.hdot_max, scenario.hdot_max);
    let mut params = ControlParams::uniform(
        scenario.segments,
        ControlValue::new(theta, hdot),
        scenario.t_hint,
        INITIAL_EPSILON,
    );
    if let Some(theta0) = scenario.theta0 {
        params.sigma[0].theta = theta0;
    }
    params
}

/// Start `index` of the multistart: index 0 is the nominal start, later
/// ones add uniform heading and vertical-rate perturbations drawn from `seed`.
pub fn perturbed_start(scenario: &Scenario, cfg: &SolverConfig, index: usize, seed: u64) -> ControlParams {
    let mut params = nominal_start(scenario);
    if index == 0 {
        return params;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, u) in params.sigma.iter_mut().enumerate() {
        let dtheta = if cfg.heading_spread > 0.0 {
            rng.random_range(-cfg.heading_spread..=cfg.heading_spread)
        } else {
            0.0
        };
        let dhdot = if cfg.hdot_spread > 0.0 {
            rng.random_range(-cfg.hdot_spread..=cfg.hdot_spread)
        } else {
            0.0
        };
        if !(k == 0 && scenario.theta0.is_some()) {
            u.theta = crate::model::wrap_angle(u.theta + dtheta);
        }
        u.hdot = (u.hdot + dhdot).clamp(-scenario.hdot_max, scenario.hdot_max);
    }
    params
}

/// One stage of the penalty schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub delta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub violation: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub line_search_stall: bool,
}

/// Outcome of one multistart run over the whole schedule.
#[derive(Debug, Clone)]
pub struct StartRun {
    pub index: usize,
    pub seed: u64,
    pub params: ControlParams,
    pub violation: f64,
    pub terminal_miss: f64,
    pub min_clearance: Option<f64>,
    pub feasible: bool,
    pub delta_used: f64,
    pub iterations: usize,
    pub history: Vec<StageRecord>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub best_params: ControlParams,
    /// Flight time `sum(rho)/p` of `best_params`.
    pub horizon: f64,
    pub final_violation: f64,
    pub terminal_miss: f64,
    /// Smallest signed distance margin in meters, `None` if no obstacle was active.
    pub min_clearance: Option<f64>,
    pub delta_used: f64,
    pub inner_iterations: usize,
    pub converged: bool,
    pub history: Vec<StageRecord>,
    /// Seed of the winning start.
    pub seed: u64,
    pub start_index: usize,
    /// Every start, in index order.
    pub starts: Vec<StartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub violation: f64,
    pub feasible: bool,
}

/// Feasibility measures of a parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct Feasibility {
    pub violation: f64,
    pub terminal_miss: f64,
    pub min_clearance: Option<f64>,
}

impl Feasibility {
    pub fn of(scenario: &Scenario, params: &ControlParams, traj: &Trajectory) -> Self {
        Self {
            violation: violation(scenario, params, traj),
            terminal_miss: (traj.terminal() - scenario.goal).norm(),
            min_clearance: traj.min_clearance_distance(scenario),
        }
    }

    pub fn acceptable(&self, penalty: &PenaltyConfig, tol: &Tolerances) -> bool {
        self.violation <= penalty.violation_tol
            && self.terminal_miss <= tol.terminal_tol
            && self.min_clearance.is_none_or(|c| c >= -tol.clearance_tol)
    }
}

fn run_schedule(
    scenario: &Scenario,
    penalty: &PenaltyConfig,
    cfg: &SolverConfig,
    index: usize,
    seed: u64,
) -> Result<StartRun> {
    let mut params = perturbed_start(scenario, cfg, index, seed);
    let integrator = cfg.integrator();
    let mut history = Vec::with_capacity(penalty.delta_schedule.len());
    let mut iterations = 0;
    let mut delta_used = penalty.delta_schedule[0];
    let mut feas = None;
    for &delta in &penalty.delta_schedule {
        let inner = minimize_inner(scenario, &params, penalty, cfg, delta)?;
        params = inner.params.clone();
        iterations += inner.iterations;
        delta_used = delta;
        let traj = integrate_forward(scenario, &params, &integrator)?;
        let f = Feasibility::of(scenario, &params, &traj);
        history.push(StageRecord {
            delta,
            horizon: params.horizon(),
            violation: f.violation,
            epsilon: params.epsilon,
            iterations: inner.iterations,
            projected_gradient_norm: inner.projected_gradient_norm,
            line_search_stall: inner.line_search_stalled(),
        });
        let done = f.acceptable(penalty, &cfg.tolerances) && inner.status == InnerStatus::Converged;
        feas = Some(f);
        if done {
            break;
        }
    }
    let f = feas.expect("schedule is non-empty");
    Ok(StartRun {
        index,
        seed,
        feasible: f.acceptable(penalty, &cfg.tolerances),
        violation: f.violation,
        terminal_miss: f.terminal_miss,
        min_clearance: f.min_clearance,
        params,
        delta_used,
        iterations,
        history,
    })
}

/// Feasible runs beat infeasible ones; then shorter flight time (or smaller
/// violation when infeasible); then the smaller seed.
fn better(a: &StartRun, b: &StartRun) -> bool {
    if a.feasible != b.feasible {
        return a.feasible;
    }
    let (ka, kb) = if a.feasible {
        (a.params.horizon(), b.params.horizon())
    } else {
        (a.violation, b.violation)
    };
    if ka != kb {
        return ka < kb;
    }
    a.seed < b.seed
}

/// Runs the penalty schedule from every multistart point and keeps the best
/// result. `converged == false` signals that no start reached feasibility.
pub fn solve(scenario: &Scenario, penalty: &PenaltyConfig, cfg: &SolverConfig) -> Result<SolveReport> {
    scenario.validate()?;
    penalty.validate()?;
    cfg.validate()?;
    let runs: Vec<StartRun> = (0..cfg.multistart)
        .into_par_iter()
        .map(|i| run_schedule(scenario, penalty, cfg, i, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;

    let starts = runs
        .iter()
        .map(|r| StartSummary {
            index: r.index,
            seed: r.seed,
            horizon: r.params.horizon(),
            violation: r.violation,
            feasible: r.feasible,
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .expect("multistart >= 1");

    Ok(SolveReport {
        horizon: best.params.horizon(),
        final_violation: best.violation,
        terminal_miss: best.terminal_miss,
        min_clearance: best.min_clearance,
        delta_used: best.delta_used,
        inner_iterations: best.iterations,
        converged: best.feasible,
        history: best.history,
        seed: best.seed,
        start_index: best.index,
        best_params: best.params,
        starts,
    })
}
