//! JSON scenario documents.
//!
//! ```json
//! {
//!   "start": [0, 0, 0], "goal": [1, 1, 1],
//!   "v_xy": 1.0, "hdot_max": 1.0, "safety_radius": 0.2, "segments": 10,
//!   "obstacles": [
//!     { "kind": "LINE", "coefficients": [0, 1, 0, 1, 0, 1],
//!       "domain": [0.1, 3.4], "safety_radius": 0.1, "hold_final": true }
//!   ],
//!   "penalty": { "delta_schedule": [10, 100, 1000] },
//!   "solver": { "seed": 1, "multistart": 8 }
//! }
//! ```
//!
//! An obstacle is either a single curve (`kind`, `coefficients`, `domain`) or
//! a list of `pieces`, each with those three keys. `theta0` and `t_hint` are
//! optional; `penalty` and `solver` fall back to their defaults key by key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Curve, CurveKind, ObstacleTrajectory, Piece, Scenario, State};
use crate::penalty::PenaltyConfig;
use crate::scenarios::ScenarioPreset;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub kind: CurveKind,
    pub coefficients: Vec<f64>,
    pub domain: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CurveKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<PieceSpec>>,
    pub safety_radius: f64,
    /// Keep the final position after the domain ends instead of vanishing.
    #[serde(default)]
    pub hold_final: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub start: [f64; 3],
    pub goal: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    pub v_xy: f64,
    pub hdot_max: f64,
    pub safety_radius: f64,
    pub segments: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hint: Option<f64>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// A validated scenario with its penalty and solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub scenario: Scenario,
    pub penalty: PenaltyConfig,
    pub solver: SolverConfig,
}

impl Problem {
    pub fn from_preset(preset: &ScenarioPreset) -> Self {
        Self {
            scenario: preset.scenario.clone(),
            penalty: preset.penalty.clone(),
            solver: SolverConfig::default(),
        }
    }
}

fn build_piece(kind: CurveKind, coefficients: &[f64], domain: [f64; 2]) -> Result<Piece> {
    Ok(Piece { t_lo: domain[0], t_hi: domain[1], curve: Curve::from_coefficients(kind, coefficients)? })
}

impl ObstacleSpec {
    fn build(&self, index: usize) -> Result<ObstacleTrajectory> {
        let context = |e: Error| Error::InvalidScenario(format!("obstacles[{index}]: {e}"));
        let pieces = match (&self.kind, &self.coefficients, &self.domain, &self.pieces) {
            (Some(kind), Some(c), Some(d), None) => vec![build_piece(*kind, c, *d).map_err(context)?],
            (None, None, None, Some(list)) if !list.is_empty() => list
                .iter()
                .map(|p| build_piece(p.kind, &p.coefficients, p.domain))
                .collect::<Result<_>>()
                .map_err(context)?,
            _ => {
                return Err(Error::InvalidScenario(format!(
                    "obstacles[{index}]: give either `kind`, `coefficients` and `domain`, or a non-empty `pieces` list"
                )))
            }
        };
        ObstacleTrajectory::new(pieces, self.safety_radius, self.hold_final).map_err(context)
    }

    fn from_trajectory(obs: &ObstacleTrajectory) -> Self {
        let spec = |p: &Piece| PieceSpec {
            kind: p.curve.kind(),
            coefficients: p.curve.coefficients(),
            domain: [p.t_lo, p.t_hi],
        };
        let base = Self {
            kind: None,
            coefficients: None,
            domain: None,
            pieces: None,
            safety_radius: obs.safety_radius(),
            hold_final: obs.hold_final(),
        };
        match obs.pieces() {
            [single] => {
                let p = spec(single);
                Self { kind: Some(p.kind), coefficients: Some(p.coefficients), domain: Some(p.domain), ..base }
            }
            many => Self { pieces: Some(many.iter().map(spec).collect()), ..base },
        }
    }
}

impl ScenarioFile {
    pub fn into_problem(self) -> Result<Problem> {
        let obstacles =
            self.obstacles.iter().enumerate().map(|(i, o)| o.build(i)).collect::<Result<Vec<_>>>()?;
        let mut scenario = Scenario {
            start: State::from(self.start),
            goal: State::from(self.goal),
            theta0: self.theta0,
            v_xy: self.v_xy,
            hdot_max: self.hdot_max,
            safety_radius: self.safety_radius,
            obstacles,
            segments: self.segments,
            t_hint: 1.0,
        };
        scenario.t_hint = match self.t_hint {
            Some(t) => t,
            None => 1.2 * scenario.kinematic_lower_bound(),
        };
        scenario.validate()?;
        self.penalty.validate()?;
        self.solver.validate()?;
        Ok(Problem { scenario, penalty: self.penalty, solver: self.solver })
    }

    pub fn from_problem(problem: &Problem) -> Self {
        let sc = &problem.scenario;
        Self {
            start: sc.start.to_array(),
            goal: sc.goal.to_array(),
            theta0: sc.theta0,
            v_xy: sc.v_xy,
            hdot_max: sc.hdot_max,
            safety_radius: sc.safety_radius,
            segments: sc.segments,
            t_hint: Some(sc.t_hint),
            obstacles: sc.obstacles.iter().map(ObstacleSpec::from_trajectory).collect(),
            penalty: problem.penalty.clone(),
            solver: problem.solver.clone(),
        }
    }
}

/// Parses a scenario document. Errors name the offending field and the
/// line and column where parsing stopped.
pub fn parse_problem(text: &str, origin: &str) -> Result<Problem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if matches!(path.as_str(), "" | "." | "?") { String::new() } else { format!(" at `{path}`") };
        let position = format!(" at line {} column {}", inner.line(), inner.column());
        let text = inner.to_string();
        let text = text.strip_suffix(&position).unwrap_or(&text);
        Error::Parse {
            path: origin.to_string(),
            message: format!("line {} column {}{field}: {text}", inner.line(), inner.column()),
        }
    })?;
    file.into_problem().map_err(|e| Error::Parse { path: origin.to_string(), message: e.to_string() })
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse { path: origin.clone(), message: e.to_string() })?;
    parse_problem(&text, &origin)
}

pub fn to_json(problem: &Problem) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScenarioFile::from_problem(problem))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::presets;

    #[test]
    fn presets_round_trip() {
        for preset in presets() {
            let problem = Problem::from_preset(&preset);
            let text = to_json(&problem).unwrap();
            let back = parse_problem(&text, "mem").unwrap();
            assert_eq!(back, problem, "{}", preset.name);
        }
    }

    #[test]
    fn minimal_document_gets_defaults() {
        let text = r#"{"start":[0,0,0],"goal":[3,4,0],"v_xy":1,"hdot_max":1,"safety_radius":0.2,"segments":4}"#;
        let p = parse_problem(text, "mem").unwrap();
        assert!((p.scenario.t_hint - 6.0).abs() < 1e-12);
        assert_eq!(p.penalty, PenaltyConfig::default());
        assert_eq!(p.solver, SolverConfig::default());
        assert!(p.scenario.obstacles.is_empty());
    }

    #[test]
    fn diagnostics_name_field_and_line() {
        let text = "{\n\"start\":[0,0,0],\"goal\":[1,1,1],\"v_xy\":1,\"hdot_max\":1,\n\"safety_radius\":0.2,\"segments\":2,\n\"obstacles\":[{\"kind\":\"SPIRAL\",\"coefficients\":[],\"domain\":[0,1],\"safety_radius\":0.1}]}";
        let msg = parse_problem(text, "bad.json").unwrap_err().to_string();
        assert!(msg.starts_with("bad.json: line 4"), "{msg}");
        assert!(msg.contains("obstacles[0].kind"), "{msg}");

        let text = r#"{"start":[0,0,0],"goal":[1,1,1],"v_xy":1,"hdot_max":1,"safety_radius":0.2,"segments":2,"colour":1}"#;
        let msg = parse_problem(text, "bad.json").unwrap_err().to_string();
        assert!(msg.contains("colour"), "{msg}");
    }

    #[test]
    fn semantic_errors_are_reported() {
        let text = r#"{"start":[0,0,0],"goal":[1,1,1],"v_xy":1,"hdot_max":1,"safety_radius":0.2,"segments":2,
            "obstacles":[{"kind":"LINE","coefficients":[0,1],"domain":[0,1],"safety_radius":0.1}]}"#;
        let msg = parse_problem(text, "x.json").unwrap_err().to_string();
        assert!(msg.contains("obstacles[0]") && msg.contains("6 coefficients"), "{msg}");

        let text = r#"{"start":[0,0,0],"goal":[1,1,1],"v_xy":-1,"hdot_max":1,"safety_radius":0.2,"segments":2}"#;
        assert!(parse_problem(text, "x.json").unwrap_err().to_string().contains("v_xy"));
    }
}
