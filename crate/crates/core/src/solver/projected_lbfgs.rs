//! Limited-memory quasi-Newton minimization over a box with periodic
//! coordinates, using projected backtracking (Armijo) line search.

use std::collections::VecDeque;

/// Smooth objective over a flat vector. Values may be `+inf` or NaN where
/// the objective is undefined; the line search rejects such points.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>);
}

/// Coordinate bounds. Periodic coordinates ignore their bounds and are
/// wrapped into `(-pi, pi]` after each accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl BoxBounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            periodic: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            if !self.periodic[i] {
                *xi = xi.clamp(self.lower[i], self.upper[i]);
            }
        }
    }

    pub fn wrap(&self, x: &mut [f64]) {
        for (xi, periodic) in x.iter_mut().zip(&self.periodic) {
            if *periodic {
                *xi = crate::model::wrap_angle(*xi);
            }
        }
    }

    fn is_fixed(&self, i: usize) -> bool {
        !self.periodic[i] && self.lower[i] == self.upper[i]
    }

    /// Infinity norm of `P(x - g) - x`.
    pub fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        (0..x.len())
            .map(|i| {
                if self.periodic[i] {
                    g[i].abs()
                } else {
                    ((x[i] - g[i]).clamp(self.lower[i], self.upper[i]) - x[i]).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Coordinates the next step may move: not fixed, and not pinned to a
    /// bound by a gradient pointing outward.
    fn free_mask(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        (0..x.len())
            .map(|i| {
                if self.periodic[i] {
                    return true;
                }
                if self.is_fixed(i) {
                    return false;
                }
                let at_lower = x[i] <= self.lower[i] && g[i] > 0.0;
                let at_upper = x[i] >= self.upper[i] && g[i] < 0.0;
                !(at_lower || at_upper)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub max_iterations: usize,
    pub grad_tol: f64,
    /// Step shrink factor in `(0, 1)`.
    pub backtrack: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    /// Largest coordinate move allowed for a steepest-descent step.
    pub max_initial_step: f64,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            grad_tol: 1e-6,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            max_initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    Converged,
    MaxIterations,
    /// No step met sufficient decrease, even along the projected gradient.
    LineSearchStall,
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub projected_gradient_norm: f64,
    pub status: InnerStatus,
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        if sy <= 1e-12 * (ss * yy).sqrt() || sy <= 0.0 {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion for `-H g` restricted to `free` coordinates.
    fn direction(&self, g: &[f64], free: &[bool]) -> Vec<f64> {
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(free).map(|(a, f)| if *f { *a } else { 0.0 }).collect()
        };
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let mut q = mask(g);
        let mut alphas = Vec::with_capacity(self.pairs.len());
        let masked: Vec<(Vec<f64>, Vec<f64>, f64)> = self
            .pairs
            .iter()
            .filter_map(|(s, y, _)| {
                let (s, y) = (mask(s), mask(y));
                let sy = dot(&s, &y);
                (sy > 0.0).then(|| (s, y, 1.0 / sy))
            })
            .collect();
        for (s, y, rho) in masked.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = masked.last() {
            let gamma = dot(s, y) / dot(y, y).max(f64::MIN_POSITIVE);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in masked.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter().map(|v| -v).collect()
    }
}

/// Minimizes `objective` from `x0` inside `bounds`. The objective value is
/// non-increasing over accepted iterates.
pub fn minimize<O: Objective>(
    objective: &O,
    x0: &[f64],
    bounds: &BoxBounds,
    settings: &LbfgsSettings,
) -> InnerOutcome {
    let n = x0.len();
    assert_eq!(bounds.len(), n, "bounds dimension");
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    bounds.wrap(&mut x);
    let (mut f, mut g) = objective.value_and_gradient(&x);
    let mut evaluations = 1;
    let mut memory = Memory { pairs: VecDeque::new(), capacity: settings.memory.max(1) };
    let mut status = InnerStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        let pg = bounds.projected_gradient_norm(&x, &g);
        if pg <= settings.grad_tol {
            status = InnerStatus::Converged;
            break;
        }
        iterations += 1;
        let free = bounds.free_mask(&x, &g);

        let mut accepted = None;
        // quasi-Newton direction first, steepest descent as the fallback
        for use_memory in [true, false] {
            if use_memory && memory.pairs.is_empty() {
                continue;
            }
            let mut d = if use_memory {
                memory.direction(&g, &free)
            } else {
                g.iter().zip(&free).map(|(gi, f)| if *f { -gi } else { 0.0 }).collect()
            };
            let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                continue;
            }
            if !use_memory {
                let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if dmax > settings.max_initial_step {
                    let c = settings.max_initial_step / dmax;
                    d.iter_mut().for_each(|v| *v *= c);
                }
            }
            if let Some(step) = line_search(objective, &x, f, &g, &d, bounds, settings, &mut evaluations) {
                accepted = Some(step);
                break;
            }
        }

        let Some((x_new, _)) = accepted else {
            status = InnerStatus::LineSearchStall;
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mut x_wrapped = x_new;
        bounds.wrap(&mut x_wrapped);
        let (f_new, g_new) = objective.value_and_gradient(&x_wrapped);
        evaluations += 1;
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        x = x_wrapped;
        f = f_new;
        g = g_new;
    }

    let projected_gradient_norm = bounds.projected_gradient_norm(&x, &g);
    if status == InnerStatus::MaxIterations && projected_gradient_norm <= settings.grad_tol {
        status = InnerStatus::Converged;
    }
    InnerOutcome { x, value: f, iterations, evaluations, projected_gradient_norm, status }
}

/// Backtracking along the projected path `P(x + a d)`. Returns the accepted
/// (unwrapped) point and its value.
#[allow(clippy::too_many_arguments)]
fn line_search<O: Objective>(
    objective: &O,
    x: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    bounds: &BoxBounds,
    settings: &LbfgsSettings,
    evaluations: &mut usize,
) -> Option<(Vec<f64>, f64)> {
    let mut alpha = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..60 {
        for i in 0..x.len() {
            trial[i] = x[i] + alpha * d[i];
        }
        bounds.project(&mut trial);
        let mut moved = 0.0f64;
        let mut decrease = 0.0;
        for i in 0..x.len() {
            let si = trial[i] - x[i];
            moved = moved.max(si.abs());
            decrease += g[i] * si;
        }
        if moved == 0.0 {
            return None;
        }
        let ft = objective.value(&trial);
        *evaluations += 1;
        if ft.is_finite() && ft <= f + settings.sufficient_decrease * decrease && ft <= f {
            return Some((trial, ft));
        }
        alpha *= settings.backtrack;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;
    impl Objective for Rosenbrock {
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
            let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            let g1 = 200.0 * (x[1] - x[0] * x[0]);
            (self.value(x), vec![g0, g1])
        }
    }

    struct Quadratic(Vec<f64>);
    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.0).map(|(a, c)| (a - c).powi(2)).sum()
        }
        fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
            (self.value(x), x.iter().zip(&self.0).map(|(a, c)| 2.0 * (a - c)).collect())
        }
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let settings = LbfgsSettings { max_iterations: 2000, grad_tol: 1e-8, ..Default::default() };
        let out = minimize(&Rosenbrock, &[-1.2, 1.0], &BoxBounds::unbounded(2), &settings);
        assert_eq!(out.status, InnerStatus::Converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{:?}", out.x);
    }

    #[test]
    fn active_bound_is_respected() {
        let bounds = BoxBounds {
            lower: vec![-1.0, 2.0, 0.0],
            upper: vec![1.0, 3.0, 0.0],
            periodic: vec![false; 3],
        };
        let out = minimize(&Quadratic(vec![5.0, 0.0, 4.0]), &[0.0, 2.5, 0.0], &bounds, &LbfgsSettings::default());
        assert_eq!(out.status, InnerStatus::Converged);
        assert_eq!(out.x, vec![1.0, 2.0, 0.0]);
    }

    #[test]
    fn periodic_coordinate_is_wrapped() {
        let bounds = BoxBounds { lower: vec![0.0], upper: vec![0.0], periodic: vec![true] };
        // minimum at 3.0 rad; iterate crosses pi and must come back wrapped
        struct Cos;
        impl Objective for Cos {
            fn value(&self, x: &[f64]) -> f64 {
                -(x[0] - 3.0).cos()
            }
            fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
                (self.value(x), vec![(x[0] - 3.0).sin()])
            }
        }
        let out = minimize(&Cos, &[2.0], &bounds, &LbfgsSettings { grad_tol: 1e-10, ..Default::default() });
        assert!((out.x[0] - 3.0).abs() < 1e-8);
        let out = minimize(&Cos, &[-3.0], &bounds, &LbfgsSettings { grad_tol: 1e-10, ..Default::default() });
        assert!(out.x[0] > -std::f64::consts::PI && out.x[0] <= std::f64::consts::PI);
        assert!((out.x[0] - 3.0).abs() < 1e-8, "{:?}", out.x);
    }

    #[test]
    fn start_at_optimum_is_fixed_point() {
        let out = minimize(&Quadratic(vec![1.0, 2.0]), &[1.0, 2.0], &BoxBounds::unbounded(2), &LbfgsSettings::default());
        assert_eq!(out.status, InnerStatus::Converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![1.0, 2.0]);
    }

    #[test]
    fn stalls_on_inconsistent_gradient() {
        struct Liar;
        impl Objective for Liar {
            fn value(&self, x: &[f64]) -> f64 {
                x[0]
            }
            fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
                (x[0], vec![-1.0])
            }
        }
        let out = minimize(&Liar, &[0.0], &BoxBounds::unbounded(1), &LbfgsSettings::default());
        assert_eq!(out.status, InnerStatus::LineSearchStall);
        assert_eq!(out.x, vec![0.0]);
    }
}
