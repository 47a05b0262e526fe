//! Trajectory, control and summary files.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader never sees a partial artifact.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlValue, Scenario};
use crate::parametrization::ControlParams;
use crate::simulate::Trajectory;
use crate::solver::{SolveReport, StageRecord, StartSummary};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CONTROLS_FILE: &str = "controls.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Where a run writes its three artifacts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub trajectory: PathBuf,
    pub controls: PathBuf,
    pub summary: PathBuf,
}

impl ArtifactPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            trajectory: dir.join(TRAJECTORY_FILE),
            controls: dir.join(CONTROLS_FILE),
            summary: dir.join(SUMMARY_FILE),
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w)?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `s,t,x,y,z,theta,hdot,clearance_1..clearance_n`; clearances are signed
/// distances in meters, empty while the obstacle is out of its domain.
pub fn trajectory_csv(scenario: &Scenario, traj: &Trajectory) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        let mut header: Vec<String> =
            ["s", "t", "x", "y", "z", "theta", "hdot"].iter().map(|h| h.to_string()).collect();
        header.extend((1..=scenario.obstacles.len()).map(|i| format!("clearance_{i}")));
        w.write_record(&header)?;
        for smp in &traj.samples {
            let mut row = vec![
                smp.s.to_string(),
                smp.t.to_string(),
                smp.state.x.to_string(),
                smp.state.y.to_string(),
                smp.state.z.to_string(),
                smp.control.theta.to_string(),
                smp.control.hdot.to_string(),
            ];
            for obs in &scenario.obstacles {
                let radius = scenario.safety_radius.max(obs.safety_radius());
                row.push(match obs.position(smp.t) {
                    Some(pos) => ((smp.state - pos).norm() - radius).to_string(),
                    None => String::new(),
                });
            }
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// One row of the controls file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub k: usize,
    pub theta_k: f64,
    pub hdot_k: f64,
    pub rho_k: f64,
    pub dt_k: f64,
}

/// `k,theta_k,hdot_k,rho_k,dt_k` with `dt_k = rho_k / p` and one-based `k`.
pub fn controls_csv(params: &ControlParams) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        for (k, (u, rho)) in params.sigma.iter().zip(&params.rho).enumerate() {
            w.serialize(ControlRow {
                k: k + 1,
                theta_k: u.theta,
                hdot_k: u.hdot,
                rho_k: *rho,
                dt_k: params.segment_duration(k),
            })?;
        }
        Ok(())
    })
}

/// Reads a controls file back into parameters with slack `epsilon`.
pub fn read_controls(path: &Path, epsilon: f64) -> Result<ControlParams> {
    let origin = path.display().to_string();
    let parse_err = |message: String| Error::Parse { path: origin.clone(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let mut rows: Vec<ControlRow> = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row: ControlRow = row.map_err(|e| parse_err(format!("row {}: {e}", i + 1)))?;
        if row.k != i + 1 {
            return Err(parse_err(format!("row {}: expected k = {}, got {}", i + 1, i + 1, row.k)));
        }
        rows.push(row);
    }
    ControlParams::new(
        rows.iter().map(|r| ControlValue::new(r.theta_k, r.hdot_k)).collect(),
        rows.iter().map(|r| r.rho_k).collect(),
        epsilon,
    )
    .map_err(|e| parse_err(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub violation: f64,
    pub terminal_miss: f64,
    /// Smallest signed obstacle distance in meters.
    pub min_clearance: Option<f64>,
    pub epsilon: f64,
    pub delta_used: f64,
    pub iterations: usize,
    pub converged: bool,
    pub per_delta_history: Vec<StageRecord>,
    pub seed: u64,
    pub start_index: usize,
    pub starts: Vec<StartSummary>,
    pub wall_time_s: f64,
}

impl Summary {
    pub fn from_report(name: &str, report: &SolveReport, wall_time_s: f64) -> Self {
        Self {
            scenario: name.to_string(),
            horizon: report.horizon,
            violation: report.final_violation,
            terminal_miss: report.terminal_miss,
            min_clearance: report.min_clearance,
            epsilon: report.best_params.epsilon,
            delta_used: report.delta_used,
            iterations: report.inner_iterations,
            converged: report.converged,
            per_delta_history: report.history.clone(),
            seed: report.seed,
            start_index: report.start_index,
            starts: report.starts.clone(),
            wall_time_s,
        }
    }
}

pub fn write_trajectory(path: &Path, scenario: &Scenario, traj: &Trajectory) -> Result<()> {
    write_atomic(path, &trajectory_csv(scenario, traj)?)
}

pub fn write_controls(path: &Path, params: &ControlParams) -> Result<()> {
    write_atomic(path, &controls_csv(params)?)
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
