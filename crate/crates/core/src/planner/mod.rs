//! A first-order trajectory optimizer with the elastic model folded into its
//! outer loop: gradients use frozen DH values, and after every accepted step
//! each waypoint's DH values get exactly one torque/compliance update from
//! the frames the line search already computed.

mod benchmark;
mod objective;

pub use benchmark::{compensation_benchmark, BenchmarkRow, PlanningProblem};
pub use objective::{Goal, PlannerObjective, WorldSphere};

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationParams;
use crate::elastic::{solve_equilibrium, SolverSettings, TorqueScratch};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_into, Configuration, DhParamSet, FrameSet};
use crate::model::RobotModel;
use objective::ObjectiveEval;

/// `Q = [q₁ … qₙ]`. The first waypoint is always fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<Configuration>,
    pub fixed_end: bool,
}

impl Path {
    fn free_range(&self) -> std::ops::Range<usize> {
        let n = self.waypoints.len();
        1..if self.fixed_end { n - 1 } else { n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KinematicsMode {
    /// DH values stay at ρ₀.
    Geometric,
    /// One torque/compliance update per waypoint and outer iteration.
    Elastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    pub n_waypoints: usize,
    pub max_iter: usize,
    /// Converged once the largest joint update of an iteration is below this (rad).
    pub step_tol: f64,
    /// Converged once the largest DH update is below this (rad). Defaults to
    /// `step_tol`.
    pub rho_tol: Option<f64>,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Damping of the per-iteration DH update.
    pub lambda: f64,
    pub mode: KinematicsMode,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            n_waypoints: 12,
            max_iter: 5000,
            step_tol: 1e-6,
            rho_tol: None,
            armijo: 1e-4,
            lambda: 1.0,
            mode: KinematicsMode::Elastic,
        }
    }
}

impl PlannerSettings {
    pub fn rho_tol(&self) -> f64 {
        self.rho_tol.unwrap_or(self.step_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub path: Path,
    /// DH values of every waypoint at the solution.
    pub rho: Vec<DhParamSet>,
    pub outer_iterations: usize,
    pub torque_updates: usize,
    /// `max |ρ − ρ(ρ₀, C, τ(F(q, ρ)))|` over waypoints at the solution (rad).
    pub equilibrium_residual_at_solution: f64,
    /// s
    pub wall_time: f64,
    /// Time spent in the torque/compliance updates (s).
    pub elastic_update_time: f64,
    pub objective_trace: Vec<f64>,
}

impl PlanResult {
    pub fn time_per_iteration(&self) -> f64 {
        self.wall_time / self.outer_iterations.max(1) as f64
    }

    /// Cost of the elastic updates relative to the rest of the optimizer.
    pub fn elastic_overhead(&self) -> f64 {
        self.elastic_update_time / (self.wall_time - self.elastic_update_time).max(f64::MIN_POSITIVE)
    }
}

fn initial_path(model: &RobotModel, start: &Configuration, goal: &Goal, n: usize) -> Path {
    match goal {
        Goal::Configuration(end) => Path {
            waypoints: (0..n)
                .map(|k| match k {
                    0 => start.clone(),
                    k if k == n - 1 => end.clone(),
                    _ => {
                        let t = k as f64 / (n - 1) as f64;
                        Configuration(start.iter().zip(end.iter()).map(|(a, b)| a + t * (b - a)).collect())
                    }
                })
                .collect(),
            fixed_end: true,
        },
        Goal::Position { .. } => {
            debug_assert_eq!(start.len(), model.n_joints());
            Path {
                waypoints: vec![start.clone(); n],
                fixed_end: false,
            }
        }
    }
}

/// Descent direction `−M⁻¹∇H` with `M` the exact smoothness Hessian plus
/// the Gauss–Newton blocks of the goal and obstacle terms.
///
/// The smoothness Hessian couples neighbouring waypoints through `−2s·I`,
/// so `M` is block tridiagonal and a block Thomas sweep solves it.
fn precondition(path: &Path, smoothness: f64, grad: &[DVector<f64>], blocks: &[DMatrix<f64>]) -> Vec<DVector<f64>> {
    if smoothness <= 0.0 || grad.is_empty() {
        return grad.iter().map(|g| -g).collect();
    }
    let m = grad.len();
    let dof = grad[0].len();
    let w = 2.0 * smoothness;
    let mut inv: Vec<DMatrix<f64>> = Vec::with_capacity(m);
    let mut y: Vec<DVector<f64>> = Vec::with_capacity(m);
    for k in 0..m {
        let diag = if k + 1 == m && !path.fixed_end { w } else { 2.0 * w };
        let mut d = blocks[k].clone();
        for i in 0..dof {
            d[(i, i)] += diag;
        }
        let mut rhs = grad[k].clone();
        if k > 0 {
            d -= (w * w) * &inv[k - 1];
            rhs += w * (&inv[k - 1] * &y[k - 1]);
        }
        let d_inv = match d.clone().cholesky() {
            Some(c) => c.inverse(),
            None => d.try_inverse().unwrap_or_else(|| DMatrix::identity(dof, dof)),
        };
        inv.push(d_inv);
        y.push(rhs);
    }
    let mut x: Vec<DVector<f64>> = vec![DVector::zeros(dof); m];
    x[m - 1] = &inv[m - 1] * &y[m - 1];
    for k in (0..m - 1).rev() {
        x[k] = &inv[k] * (&y[k] + w * &x[k + 1]);
    }
    x.into_iter().map(|v| -v).collect()
}

/// Optimizes a path from `start` to `goal` under the kinematics of `theta`.
pub fn plan(
    model: &RobotModel,
    theta: &CalibrationParams,
    start: &Configuration,
    goal: &Goal,
    objective: &PlannerObjective,
    settings: &PlannerSettings,
) -> Result<PlanResult> {
    let clock = Instant::now();
    if start.len() != model.n_joints() {
        return Err(Error::ModelMismatch("start configuration has wrong length".into()));
    }
    if let Some((j, _)) = start
        .iter()
        .zip(&model.joint_limits)
        .enumerate()
        .find(|(_, (q, l))| !l.contains(**q))
    {
        return Err(Error::InvalidInput(format!("start violates the limit of joint {j}")));
    }
    if settings.n_waypoints < 2 {
        return Err(Error::InvalidInput("a path needs at least two waypoints".into()));
    }
    goal.validate(model)?;
    objective.validate()?;
    let mut path = initial_path(model, start, goal, settings.n_waypoints);
    let n = path.waypoints.len();
    let free = path.free_range();
    let rho0 = &theta.rho0;
    let mut rho: Vec<DhParamSet> = vec![rho0.clone(); n];
    let eval = ObjectiveEval {
        model,
        objective,
        goal,
    };
    let mut frames: Vec<FrameSet> = vec![FrameSet::with_len(model.n_links()); n];
    let mut trial_frames = frames.clone();
    let mut torques = Vec::with_capacity(model.n_links());
    let mut scratch = TorqueScratch::default();
    let mut objective_trace = Vec::new();
    let mut elastic_update_time = 0.0;
    let mut torque_updates = 0;
    let rho_tol = settings.rho_tol();

    for iteration in 1..=settings.max_iter {
        // (1) frames at the current ρ, (2) gradient with ρ frozen
        let value = eval.value(&path, &rho, &mut frames);
        objective_trace.push(value);
        let grad = eval.gradient(&path, &frames);
        let blocks = eval.curvature(&path, &frames);
        let dir = precondition(&path, objective.smoothness, &grad, &blocks);
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g.dot(d)).sum();

        // (3) backtracking line search on H(Q) at fixed ρ
        let mut step_size = 0.0;
        if slope < 0.0 {
            let mut alpha = 1.0;
            let mut trial = path.clone();
            while alpha > 1e-12 {
                for (k, d) in free.clone().zip(&dir) {
                    for (j, q) in trial.waypoints[k].iter_mut().enumerate() {
                        *q = path.waypoints[k][j] + alpha * d[j];
                    }
                }
                let v = eval.value(&trial, &rho, &mut trial_frames);
                if v <= value + settings.armijo * alpha * slope {
                    step_size = dir.iter().map(|d| alpha * d.amax()).fold(0.0, f64::max);
                    std::mem::swap(&mut path, &mut trial);
                    std::mem::swap(&mut frames, &mut trial_frames);
                    break;
                }
                alpha *= 0.5;
            }
        }
        // `frames` now belong to the accepted path at the current ρ.

        // (4) one torque/compliance update per waypoint
        let mut rho_update: f64 = 0.0;
        if settings.mode == KinematicsMode::Elastic {
            let t0 = Instant::now();
            for (k, f) in frames.iter().enumerate() {
                scratch.compute(model, f, &theta.masses, &model.gravity, &mut torques);
                for (i, ((r, p0), c)) in rho[k].iter_mut().zip(rho0.iter()).zip(theta.compliance.iter()).enumerate() {
                    let t = torques[i];
                    let target = [p0.alpha + c.alpha * t.x, p0.beta + c.beta * t.y, p0.theta + c.theta * t.z];
                    let cur = [&mut r.alpha, &mut r.beta, &mut r.theta];
                    for (v, tv) in cur.into_iter().zip(target) {
                        rho_update = rho_update.max((tv - *v).abs());
                        *v = if settings.lambda == 1.0 {
                            tv
                        } else {
                            (1.0 - settings.lambda) * *v + settings.lambda * tv
                        };
                    }
                }
                torque_updates += 1;
            }
            elastic_update_time += t0.elapsed().as_secs_f64();
        }

        if step_size < settings.step_tol && rho_update < rho_tol {
            let residual = if settings.mode == KinematicsMode::Elastic {
                path.waypoints
                    .iter()
                    .zip(&rho)
                    .map(|(q, r)| crate::elastic::equilibrium_residual(model, q, r, rho0, &theta.compliance, &theta.masses))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0, f64::max)
            } else {
                0.0
            };
            return Ok(PlanResult {
                path,
                rho,
                outer_iterations: iteration,
                torque_updates,
                equilibrium_residual_at_solution: residual,
                wall_time: clock.elapsed().as_secs_f64(),
                elastic_update_time,
                objective_trace,
            });
        }
    }
    Err(Error::PlannerNotConverged {
        iterations: settings.max_iter,
        trace: objective_trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCheck {
    /// `max |ρ_planner − ρ*|` over waypoints and rotational DH values (rad).
    pub max_rho_residual: f64,
    /// Largest TCP displacement between planner frames and full solve (m).
    pub max_tcp_discrepancy: f64,
}

/// Re-solves the equilibrium of every waypoint to convergence and compares
/// with the DH values the planner ended with.
pub fn verify_equilibrium_at_solution(
    model: &RobotModel,
    theta: &CalibrationParams,
    result: &PlanResult,
    tol: f64,
) -> Result<EquilibriumCheck> {
    let settings = SolverSettings {
        tol,
        ..SolverSettings::default()
    };
    let mut check = EquilibriumCheck {
        max_rho_residual: 0.0,
        max_tcp_discrepancy: 0.0,
    };
    let mut frames = FrameSet::with_len(model.n_links());
    for (q, rho) in result.path.waypoints.iter().zip(&result.rho) {
        let eq = solve_equilibrium(model, q, &theta.rho0, &theta.compliance, &theta.masses, &settings)?;
        check.max_rho_residual = check.max_rho_residual.max(rho_rotational_diff(rho, &eq.rho_star));
        forward_kinematics_into(model, q, rho, &mut frames);
        for link in model.tcp_links() {
            let d: Vector3<f64> = frames.origin(link) - eq.frames.origin(link);
            check.max_tcp_discrepancy = check.max_tcp_discrepancy.max(d.norm());
        }
    }
    Ok(check)
}

fn rho_rotational_diff(a: &DhParamSet, b: &DhParamSet) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| {
        m.max((x.alpha - y.alpha).abs())
            .max((x.beta - y.beta).abs())
            .max((x.theta - y.theta).abs())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_preconditioner_matches_dense() {
        let m = 4;
        let dof = 2;
        let path = Path {
            waypoints: vec![Configuration(vec![0.0; dof]); m + 1],
            fixed_end: false,
        };
        let grad: Vec<DVector<f64>> = (0..m).map(|k| DVector::from_vec(vec![k as f64 - 1.5, 0.3 * k as f64 + 0.2])).collect();
        let block = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let s = 0.7;
        let mut blocks = vec![DMatrix::zeros(dof, dof); m];
        blocks[1] = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, -0.2, 0.1]);
        blocks[m - 1] = block.clone();
        let dir = precondition(&path, s, &grad, &blocks);
        let n = m * dof;
        let mut h = DMatrix::zeros(n, n);
        for k in 0..m {
            let diag = if k + 1 == m { 1.0 } else { 2.0 };
            for j in 0..dof {
                h[(k * dof + j, k * dof + j)] = 2.0 * s * diag;
                if k + 1 < m {
                    h[(k * dof + j, (k + 1) * dof + j)] = -2.0 * s;
                    h[((k + 1) * dof + j, k * dof + j)] = -2.0 * s;
                }
            }
        }
        for (k, blk) in blocks.iter().enumerate() {
            for a in 0..dof {
                for b in 0..dof {
                    h[(k * dof + a, k * dof + b)] += blk[(a, b)];
                }
            }
        }
        let g = DVector::from_iterator(n, grad.iter().flat_map(|v| v.iter().copied()));
        let x = h.lu().solve(&(-g)).unwrap();
        for k in 0..m {
            for j in 0..dof {
                assert!((dir[k][j] - x[k * dof + j]).abs() < 1e-12);
            }
        }
    }
}
