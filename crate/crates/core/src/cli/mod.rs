//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a failed gradient check or an output error,
//! 2 when the solver found no feasible point, 3 on invalid input.

pub mod export;
pub mod scenario_file;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::adjoint::gradient_check;
use crate::error::{Error, Result};
use crate::penalty::violation;
use crate::scenarios::{preset, presets};
use crate::simulate::integrate_forward;
use crate::solver::{solve, Feasibility};

use export::{read_controls, write_controls, write_summary, write_trajectory, ArtifactPaths, Summary};
use scenario_file::{load_problem, to_json, Problem};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NO_FEASIBLE_POINT: u8 = 2;
pub const EXIT_INPUT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dubins-penalty", version, about = "Time-optimal Dubins airplane trajectories around moving obstacles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Built-in scenario name (see `presets`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a trajectory and write trajectory, controls and summary files.
    Solve {
        #[command(flatten)]
        source: Source,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the solver seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the number of multistart instances.
        #[arg(long)]
        multistart: Option<usize>,
    },
    /// Integrate a controls file without optimizing.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Controls CSV (`k,theta_k,hdot_k,rho_k,dt_k`).
        #[arg(long)]
        params: PathBuf,
        /// Trajectory CSV to write; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare adjoint gradients with central differences at random points.
    CheckGradient {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Absolute differences below this count as agreement.
        #[arg(long, default_value_t = 1e-6)]
        floor: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// List built-in scenarios.
    Presets,
    /// Write a scenario as JSON.
    ExportScenario {
        #[command(flatten)]
        source: Source,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A loaded problem plus the name used in reports.
fn load(source: &Source) -> Result<(String, Problem)> {
    match (&source.preset, &source.scenario) {
        (Some(name), _) => Ok((name.clone(), Problem::from_preset(&preset(name)?))),
        (None, Some(path)) => Ok((path.display().to_string(), load_problem(path)?)),
        (None, None) => Err(Error::InvalidConfig("need --preset or --scenario".into())),
    }
}

/// Errors caused by the user's input rather than by the run itself.
fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidScenario(_)
            | Error::InvalidParams(_)
            | Error::InvalidConfig(_)
            | Error::UnknownPreset(_)
            | Error::Parse { .. }
    )
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if is_input_error(&e) {
                EXIT_INPUT
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Solve { source, out, seed, multistart } => {
            let (name, mut problem) = load(&source)?;
            if let Some(seed) = seed {
                problem.solver.seed = seed;
            }
            if let Some(m) = multistart {
                problem.solver.multistart = m;
            }
            run_solve(&name, &problem, &out)
        }
        Command::Simulate { source, params, out } => {
            let (_, problem) = load(&source)?;
            run_simulate(&problem, &params, out.as_deref())
        }
        Command::CheckGradient { source, seed, samples, step, floor, tolerance } => {
            let (name, problem) = load(&source)?;
            let delta = problem.penalty.delta_schedule[0];
            let check = gradient_check(
                &problem.scenario,
                &problem.solver.integrator(),
                &problem.penalty,
                delta,
                samples,
                seed,
                step,
                floor,
            )?;
            println!(
                "{name}: {samples} samples ({} intruding), seed {seed}, max relative error {:.3e} (sample {})",
                check.active_samples, check.max_relative_error, check.worst_sample
            );
            Ok(if check.max_relative_error <= tolerance { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Presets => {
            for p in presets() {
                println!(
                    "{:<10} reference T = {:.4}  delta = {:<4}  {}",
                    p.name, p.reference_t, p.reference_delta, p.description
                );
            }
            Ok(EXIT_OK)
        }
        Command::ExportScenario { source, out } => {
            let (_, problem) = load(&source)?;
            let mut text = to_json(&problem)?;
            text.push('\n');
            match out {
                Some(path) => export::write_atomic(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
            Ok(EXIT_OK)
        }
    }
}

fn run_solve(name: &str, problem: &Problem, out: &std::path::Path) -> Result<u8> {
    let started = Instant::now();
    let report = solve(&problem.scenario, &problem.penalty, &problem.solver)?;
    let wall = started.elapsed().as_secs_f64();
    let traj = integrate_forward(&problem.scenario, &report.best_params, &problem.solver.integrator())?;

    let paths = ArtifactPaths::in_dir(out);
    write_trajectory(&paths.trajectory, &problem.scenario, &traj)?;
    write_controls(&paths.controls, &report.best_params)?;
    write_summary(&paths.summary, &Summary::from_report(name, &report, wall))?;

    println!(
        "{name}: T = {:.6}  violation = {:.3e}  min clearance = {}  converged = {}  ({wall:.1} s)",
        report.horizon,
        report.final_violation,
        report.min_clearance.map_or("n/a".to_string(), |c| format!("{c:.4}")),
        report.converged,
    );
    println!("wrote {}", out.display());
    if report.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: no feasible point found");
        Ok(EXIT_NO_FEASIBLE_POINT)
    }
}

fn run_simulate(problem: &Problem, params: &std::path::Path, out: Option<&std::path::Path>) -> Result<u8> {
    let params = read_controls(params, problem.penalty.eps_min)?;
    if params.segments() != problem.scenario.segments {
        return Err(Error::InvalidParams(format!(
            "controls file has {} segments, scenario expects {}",
            params.segments(),
            problem.scenario.segments
        )));
    }
    let traj = integrate_forward(&problem.scenario, &params, &problem.solver.integrator())?;
    match out {
        Some(path) => {
            write_trajectory(path, &problem.scenario, &traj)?;
            let f = Feasibility::of(&problem.scenario, &params, &traj);
            println!(
                "T = {}  violation = {:.3e}  terminal miss = {:.3e}",
                params.horizon(),
                violation(&problem.scenario, &params, &traj),
                f.terminal_miss
            );
        }
        None => print!("{}", String::from_utf8_lossy(&export::trajectory_csv(&problem.scenario, &traj)?)),
    }
    Ok(EXIT_OK)
}
