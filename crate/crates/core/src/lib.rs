//! Time-optimal, obstacle-avoiding flight paths for a Dubins airplane.
//!
//! Controls are piecewise constant over `p` segments whose durations are
//! decision variables (time scaling onto `s in [0, 1]`). Obstacle clearance
//! and the terminal condition enter an exact penalty cost whose gradient is
//! computed with a backward co-state sweep, and a projected quasi-Newton
//! method minimizes it over an increasing penalty schedule.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod cli;
pub mod error;
pub mod model;
pub mod parametrization;
pub mod penalty;
pub mod scenarios;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
