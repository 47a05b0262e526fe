//! Piecewise-constant controls and the time-scaling transform.
//!
//! Physical time `t in [0, T]` is mapped onto normalized time `s in [0, 1]`
//! with fixed switching points `k/p`. On segment `k` the slope `dt/ds` is the
//! segment duration parameter `rho_k`, so the segment lasts `rho_k / p`
//! seconds and the horizon is `sum(rho) / p`.

use crate::error::{Error, Result};
use crate::model::ControlValue;

/// Smallest segment duration parameter the solver keeps.
pub const RHO_MIN: f64 = 1e-6;

/// Decision variables: per-segment controls, per-segment durations and the
/// penalty slack.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub sigma: Vec<ControlValue>,
    pub rho: Vec<f64>,
    pub epsilon: f64,
}

impl ControlParams {
    pub fn new(sigma: Vec<ControlValue>, rho: Vec<f64>, epsilon: f64) -> Result<Self> {
        let params = Self { sigma, rho, epsilon };
        params.validate()?;
        Ok(params)
    }

    /// Uniform controls and durations over `p` segments.
    pub fn uniform(p: usize, control: ControlValue, rho: f64, epsilon: f64) -> Self {
        Self { sigma: vec![control; p], rho: vec![rho; p], epsilon }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_empty() {
            return Err(Error::InvalidParams("need at least one segment".into()));
        }
        if self.sigma.len() != self.rho.len() {
            return Err(Error::InvalidParams(format!(
                "{} controls but {} durations",
                self.sigma.len(),
                self.rho.len()
            )));
        }
        if let Some(k) = self.rho.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParams(format!(
                "rho[{k}] = {} must be finite and nonnegative",
                self.rho[k]
            )));
        }
        if let Some(k) =
            self.sigma.iter().position(|u| !(u.theta.is_finite() && u.hdot.is_finite()))
        {
            return Err(Error::InvalidParams(format!("control {k} is not finite")));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidParams(format!("epsilon = {} invalid", self.epsilon)));
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.rho.len()
    }

    /// Physical duration of segment `k` (zero-based).
    pub fn segment_duration(&self, k: usize) -> f64 {
        self.rho[k] / self.segments() as f64
    }

    /// Total flight time `sum(rho_k) / p`.
    pub fn horizon(&self) -> f64 {
        let p = self.segments() as f64;
        self.rho.iter().fold(0.0, |acc, r| acc + r / p)
    }

    /// Zero-based segment containing `s`: `[k/p, (k+1)/p)`, last one closed.
    pub fn segment_index(&self, s: f64) -> usize {
        segment_index(self.segments(), s)
    }

    /// Physical time reached at normalized time `s`.
    ///
    /// # Panics
    /// If `s` is outside `[0, 1]`.
    pub fn time_at(&self, s: f64) -> f64 {
        assert!((0.0..=1.0).contains(&s), "normalized time {s} outside [0, 1]");
        let p = self.segments();
        let k = self.segment_index(s);
        let pf = p as f64;
        let before = self.rho[..k].iter().fold(0.0, |acc, r| acc + r / pf);
        before + self.rho[k] * (pf * s - k as f64) / pf
    }

    pub fn control_at(&self, s: f64) -> ControlValue {
        self.sigma[self.segment_index(s)]
    }

    /// Flattened decision vector `[theta_1..theta_p, hdot_1..hdot_p, rho_1..rho_p, epsilon]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.segments() + 1);
        v.extend(self.sigma.iter().map(|u| u.theta));
        v.extend(self.sigma.iter().map(|u| u.hdot));
        v.extend_from_slice(&self.rho);
        v.push(self.epsilon);
        v
    }

    pub fn from_vector(p: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 3 * p + 1 {
            return Err(Error::InvalidParams(format!(
                "decision vector of length {} does not match p = {p}",
                v.len()
            )));
        }
        let sigma = (0..p).map(|k| ControlValue::new(v[k], v[p + k])).collect();
        Self::new(sigma, v[2 * p..3 * p].to_vec(), v[3 * p])
    }
}

/// Zero-based segment index of `s` on a grid of `p` equal segments.
pub fn segment_index(p: usize, s: f64) -> usize {
    let pf = p as f64;
    let mut k = (pf * s).floor().max(0.0) as usize;
    // guard against rounding just below a grid point
    if k + 1 < p && s >= (k + 1) as f64 / pf {
        k += 1;
    }
    k.min(p - 1)
}

/// Normalized time of grid point `k` (start of zero-based segment `k`).
pub fn grid_point(p: usize, k: usize) -> f64 {
    if k >= p {
        1.0
    } else {
        k as f64 / p as f64
    }
}
