use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationParams;
use crate::error::{Error, Result};
use crate::kinematics::Configuration;
use crate::model::RobotModel;

use super::{plan, verify_equilibrium_at_solution, Goal, KinematicsMode, PlanResult, PlannerObjective, PlannerSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningProblem {
    pub name: String,
    pub start: Configuration,
    pub goal: Goal,
    pub objective: PlannerObjective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    /// Compliance divisor; infinite for the rigid baseline.
    pub stiffness_scale: f64,
    pub solved: usize,
    /// Names of problems that did not converge at this scale.
    pub skipped: Vec<String>,
    pub mean_outer_iterations: f64,
    /// Mean outer iterations over the baseline's, on problems solved by both.
    pub iteration_inflation: f64,
    /// s
    pub mean_time_per_iteration: f64,
    pub relative_time_per_iteration: f64,
    /// Elastic update time over the remaining optimizer time.
    pub elastic_overhead: f64,
    /// rad
    pub max_equilibrium_residual: f64,
    /// m
    pub max_tcp_discrepancy: f64,
}

struct Run {
    results: Vec<Option<PlanResult>>,
}

fn run_all(
    model: &RobotModel,
    theta: &CalibrationParams,
    problems: &[PlanningProblem],
    settings: &PlannerSettings,
) -> Result<Run> {
    let mut results = Vec::with_capacity(problems.len());
    for p in problems {
        match plan(model, theta, &p.start, &p.goal, &p.objective, settings) {
            Ok(r) => results.push(Some(r)),
            Err(e) if e.is_numerical() => {
                log::warn!("problem {} skipped: {e}", p.name);
                results.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Run { results })
}

fn summarize(
    model: &RobotModel,
    theta: &CalibrationParams,
    scale: f64,
    run: &Run,
    baseline: &Run,
    problems: &[PlanningProblem],
    settings: &PlannerSettings,
) -> Result<BenchmarkRow> {
    let mut row = BenchmarkRow {
        stiffness_scale: scale,
        solved: 0,
        skipped: Vec::new(),
        mean_outer_iterations: 0.0,
        iteration_inflation: f64::NAN,
        mean_time_per_iteration: 0.0,
        relative_time_per_iteration: f64::NAN,
        elastic_overhead: 0.0,
        max_equilibrium_residual: 0.0,
        max_tcp_discrepancy: 0.0,
    };
    let (mut iters, mut base_iters) = (0usize, 0usize);
    let (mut time, mut base_time) = (0.0, 0.0);
    let (mut elastic, mut wall) = (0.0, 0.0);
    for ((p, r), b) in problems.iter().zip(&run.results).zip(&baseline.results) {
        let Some(r) = r else {
            row.skipped.push(p.name.clone());
            continue;
        };
        row.solved += 1;
        row.mean_outer_iterations += r.outer_iterations as f64;
        elastic += r.elastic_update_time;
        wall += r.wall_time;
        if settings.mode == KinematicsMode::Elastic {
            let check = verify_equilibrium_at_solution(model, theta, r, 1e-13)?;
            row.max_equilibrium_residual = row.max_equilibrium_residual.max(check.max_rho_residual);
            row.max_tcp_discrepancy = row.max_tcp_discrepancy.max(check.max_tcp_discrepancy);
        }
        if let Some(b) = b {
            iters += r.outer_iterations;
            base_iters += b.outer_iterations;
            time += r.wall_time;
            base_time += b.wall_time;
        }
    }
    if row.solved > 0 {
        row.mean_outer_iterations /= row.solved as f64;
        row.mean_time_per_iteration = wall
            / run.results.iter().flatten().map(|r| r.outer_iterations).sum::<usize>() as f64;
        row.elastic_overhead = elastic / (wall - elastic).max(f64::MIN_POSITIVE);
    }
    if base_iters > 0 {
        row.iteration_inflation = iters as f64 / base_iters as f64;
        row.relative_time_per_iteration = (time / iters as f64) / (base_time / base_iters as f64);
    }
    Ok(row)
}

/// Runs every problem with the geometric planner as the rigid baseline and
/// with the elastic planner at each stiffness scale (`C / s`).
/// Problems the baseline cannot solve are skipped everywhere.
pub fn compensation_benchmark(
    model: &RobotModel,
    theta: &CalibrationParams,
    problems: &[PlanningProblem],
    stiffness_scales: &[f64],
    settings: &PlannerSettings,
) -> Result<Vec<BenchmarkRow>> {
    if stiffness_scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput("stiffness scales must be positive".into()));
    }
    let geometric = PlannerSettings {
        mode: KinematicsMode::Geometric,
        ..*settings
    };
    let elastic = PlannerSettings {
        mode: KinematicsMode::Elastic,
        ..*settings
    };
    let baseline = run_all(model, theta, problems, &geometric)?;
    let solvable: Vec<PlanningProblem> = problems
        .iter()
        .zip(&baseline.results)
        .filter(|(_, r)| r.is_some())
        .map(|(p, _)| p.clone())
        .collect();
    let baseline = Run {
        results: baseline.results.into_iter().filter(|r| r.is_some()).collect(),
    };
    let unsolvable: Vec<String> = problems
        .iter()
        .filter(|p| !solvable.iter().any(|s| s.name == p.name))
        .map(|p| p.name.clone())
        .collect();

    let mut rows = Vec::with_capacity(stiffness_scales.len() + 1);
    let mut base_row = summarize(model, theta, f64::INFINITY, &baseline, &baseline, &solvable, &geometric)?;
    base_row.skipped.extend(unsolvable.iter().cloned());
    rows.push(base_row);
    for &s in stiffness_scales {
        let soft = CalibrationParams {
            compliance: theta.compliance.scaled(1.0 / s),
            ..theta.clone()
        };
        let run = run_all(model, &soft, &solvable, &elastic)?;
        let mut row = summarize(model, &soft, s, &run, &baseline, &solvable, &elastic)?;
        row.skipped.extend(unsolvable.iter().cloned());
        rows.push(row);
    }
    Ok(rows)
}
