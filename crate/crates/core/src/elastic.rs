//! Non-geometric model: gravity torques of a point-mass model, a linear
//! compliance law on the rotational DH parameters and the damped fixed-point
//! iteration for the implicit torque equilibrium.
//!
//! Torque reference convention, per link `i` with parent `p`:
//! `τˣ`, `τʸ` are taken about the x and y axes of frame `p` through its origin
//! (these are the axes `Rot_x(α)` and `Rot_y(β)` act on), `τᶻ` about the z
//! axis of frame `i` through its origin. A link feels every mass attached to
//! itself or to any of its descendants.

use std::ops::{Deref, DerefMut};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_into, DhParamSet, DhParams, FrameSet};
use crate::calibration::CalibrationParams;
use crate::model::RobotModel;

/// Point mass `m` at `position`, given in the frame of `link`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub link: usize,
    /// kg
    pub mass: f64,
    /// m, in the attachment frame
    pub position: Vector3<f64>,
}

/// Compliances of one link about the axes of its rotational DH parameters,
/// in rad/(N·m).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Compliance {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

impl Compliance {
    pub fn new(alpha: f64, beta: f64, theta: f64) -> Self {
        Self { alpha, beta, theta }
    }

    pub fn scaled(self, s: f64) -> Self {
        Self::new(self.alpha * s, self.beta * s, self.theta * s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplianceSet(pub Vec<Compliance>);

impl Deref for ComplianceSet {
    type Target = Vec<Compliance>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl DerefMut for ComplianceSet {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.0
    }
}

impl ComplianceSet {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Compliance::default(); n])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.iter().map(|c| c.scaled(s)).collect())
    }

    pub fn is_rigid(&self) -> bool {
        self.iter()
            .all(|c| c.alpha == 0.0 && c.beta == 0.0 && c.theta == 0.0)
    }
}

/// Per-link torques `(τˣ, τʸ, τᶻ)` in N·m.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkTorques(pub Vec<Vector3<f64>>);

impl Deref for LinkTorques {
    type Target = Vec<Vector3<f64>>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Damping of the update, `0 < λ ≤ 1`.
    pub lambda: f64,
    /// Convergence threshold on the fixed-point residual (rad).
    pub tol: f64,
    /// Maximum number of torque evaluations.
    pub max_iter: usize,
    /// Halve λ (down to [`LAMBDA_FLOOR`]) whenever the residual grows on two
    /// consecutive iterations.
    pub adaptive: bool,
}

pub const LAMBDA_FLOOR: f64 = 0.05;

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tol: 1e-9,
            max_iter: 200,
            adaptive: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidInput(
                "tol must be positive and max_iter at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub rho_star: DhParamSet,
    /// Frames at `rho_star`.
    pub frames: FrameSet,
    /// Number of torque evaluations, the first one at the initial guess.
    pub iterations: usize,
    /// `max |ρ* − ρ(ρ₀, C, τ(F(q, ρ*)))|` in rad.
    pub residual: f64,
    /// Damping in effect when the iteration stopped.
    pub lambda: f64,
    pub residual_trace: Vec<f64>,
    /// Right and left TCP positions at every iterate, starting with the
    /// initial guess.
    pub tcp_trace: Vec<[Vector3<f64>; 2]>,
}

impl EquilibriumResult {
    /// Largest TCP displacement between consecutive iterates.
    pub fn per_iteration_tcp_delta(&self) -> Vec<f64> {
        self.tcp_trace
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).norm().max((w[1][1] - w[0][1]).norm()))
            .collect()
    }

    /// Distance of every iterate's TCPs to the converged ones (max over TCPs).
    pub fn tcp_error_to_converged(&self) -> Vec<f64> {
        let last = self.tcp_trace.last().copied().unwrap_or_default();
        self.tcp_trace
            .iter()
            .map(|t| (t[0] - last[0]).norm().max((t[1] - last[1]).norm()))
            .collect()
    }
}

/// Gravity torques on every link for the given frames.
///
/// Uses subtree mass totals and first moments, so the cost is linear in the
/// number of links plus masses.
pub fn gravity_torques(
    model: &RobotModel,
    frames: &FrameSet,
    masses: &[PointMass],
    gravity: &Vector3<f64>,
) -> LinkTorques {
    let mut out = LinkTorques(Vec::with_capacity(model.links.len()));
    gravity_torques_into(model, frames, masses, gravity, &mut out.0);
    out
}

fn gravity_torques_into(
    model: &RobotModel,
    frames: &FrameSet,
    masses: &[PointMass],
    gravity: &Vector3<f64>,
    out: &mut Vec<Vector3<f64>>,
) {
    let mut scratch = TorqueScratch::default();
    scratch.compute(model, frames, masses, gravity, out);
}

/// Reusable buffers for subtree mass totals and first moments.
#[derive(Debug, Clone, Default)]
pub(crate) struct TorqueScratch {
    total: Vec<f64>,
    moment: Vec<Vector3<f64>>,
}

impl TorqueScratch {
    pub(crate) fn compute(
        &mut self,
        model: &RobotModel,
        frames: &FrameSet,
        masses: &[PointMass],
        gravity: &Vector3<f64>,
        out: &mut Vec<Vector3<f64>>,
    ) {
        let n = model.links.len();
        let (total, moment) = (&mut self.total, &mut self.moment);
        total.clear();
        total.resize(n, 0.0);
        moment.clear();
        moment.resize(n, Vector3::zeros());
        for m in masses {
            total[m.link] += m.mass;
            moment[m.link] += m.mass * frames.frames[m.link].transform_point(&m.position);
        }
        for i in (0..n).rev() {
            if let Some(p) = model.links[i].parent {
                total[p] += total[i];
                let mi = moment[i];
                moment[p] += mi;
            }
        }
        out.clear();
        for (i, link) in model.links.iter().enumerate() {
            // Σ (w_j − p) × m_j g = (S − M p) × g
            let parent = frames.parent_frame(link.parent);
            let about_parent = (moment[i] - total[i] * parent.translation).cross(gravity);
            let about_own = (moment[i] - total[i] * frames.origin(i)).cross(gravity);
            out.push(Vector3::new(
                about_parent.dot(&parent.rotation.column(0)),
                about_parent.dot(&parent.rotation.column(1)),
                about_own.dot(&frames.frames[i].rotation.column(2)),
            ));
        }
    }
}

/// `ρ = ρ₀ + C·τ` on the rotational parameters; `d` and `r` pass through.
pub fn apply_compliance(
    rho0: &DhParamSet,
    compliance: &ComplianceSet,
    torques: &LinkTorques,
) -> DhParamSet {
    let mut out = rho0.clone();
    apply_compliance_into(rho0, compliance, torques, &mut out);
    out
}

fn apply_compliance_into(
    rho0: &[DhParams],
    compliance: &[Compliance],
    torques: &[Vector3<f64>],
    out: &mut [DhParams],
) {
    for (((o, p0), c), t) in out.iter_mut().zip(rho0).zip(compliance).zip(torques) {
        *o = DhParams {
            d: p0.d,
            r: p0.r,
            alpha: p0.alpha + c.alpha * t.x,
            beta: p0.beta + c.beta * t.y,
            theta: p0.theta + c.theta * t.z,
        };
    }
}

fn rotational_residual(a: &[DhParams], b: &[DhParams]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| {
        m.max((x.alpha - y.alpha).abs())
            .max((x.beta - y.beta).abs())
            .max((x.theta - y.theta).abs())
    })
}

fn check_elastic_dims(
    model: &RobotModel,
    q: &[f64],
    rho0: &DhParamSet,
    compliance: &ComplianceSet,
    masses: &[PointMass],
) -> Result<()> {
    let n = model.links.len();
    if rho0.len() != n || compliance.len() != n {
        return Err(Error::ModelMismatch(format!(
            "expected {n} DH and compliance entries, got {} and {}",
            rho0.len(),
            compliance.len()
        )));
    }
    if q.len() != model.n_joints() {
        return Err(Error::ModelMismatch(format!(
            "configuration of length {} for {} joints",
            q.len(),
            model.n_joints()
        )));
    }
    if let Some(m) = masses.iter().find(|m| m.link >= n) {
        return Err(Error::ModelMismatch(format!(
            "mass attached to missing link {}",
            m.link
        )));
    }
    Ok(())
}

/// Solves `ρ = ρ₀ + C·τ(F(q, ρ), ν)` by the damped iteration
/// `ρₙ = (1−λ)ρₙ₋₁ + λ·ρ(ρ₀, C, τ(F(q, ρₙ₋₁)))`, starting at `ρ₀`.
pub fn solve_equilibrium(
    model: &RobotModel,
    q: &[f64],
    rho0: &DhParamSet,
    compliance: &ComplianceSet,
    masses: &[PointMass],
    settings: &SolverSettings,
) -> Result<EquilibriumResult> {
    settings.validate()?;
    check_elastic_dims(model, q, rho0, compliance, masses)?;
    solve_unchecked(model, q, rho0, compliance, masses, settings, None)
}

/// Same iteration started from the rotational parameters of `warm_start`.
pub fn solve_equilibrium_warm(
    model: &RobotModel,
    q: &[f64],
    rho0: &DhParamSet,
    compliance: &ComplianceSet,
    masses: &[PointMass],
    settings: &SolverSettings,
    warm_start: &DhParamSet,
) -> Result<EquilibriumResult> {
    settings.validate()?;
    check_elastic_dims(model, q, rho0, compliance, masses)?;
    if warm_start.len() != rho0.len() {
        return Err(Error::ModelMismatch("warm start has wrong length".into()));
    }
    solve_unchecked(model, q, rho0, compliance, masses, settings, Some(warm_start))
}

pub(crate) fn solve_unchecked(
    model: &RobotModel,
    q: &[f64],
    rho0: &DhParamSet,
    compliance: &ComplianceSet,
    masses: &[PointMass],
    settings: &SolverSettings,
    warm_start: Option<&DhParamSet>,
) -> Result<EquilibriumResult> {
    let [tcp_r, tcp_l] = model.tcp_links();
    let mut ws = Workspace::default();
    ws.start(rho0, warm_start.map(|w| &w.0[..]));
    let mut residual_trace = Vec::new();
    let mut tcp_trace = Vec::new();
    let outcome = ws.solve(model, q, rho0, compliance, masses, settings, |frames, residual| {
        tcp_trace.push([frames.origin(tcp_r), frames.origin(tcp_l)]);
        residual_trace.push(residual);
    });
    match outcome {
        Ok(stats) => Ok(EquilibriumResult {
            rho_star: DhParamSet(ws.rho),
            frames: ws.frames,
            iterations: stats.iterations,
            residual: stats.residual,
            lambda: stats.lambda,
            residual_trace,
            tcp_trace,
        }),
        Err(Error::EquilibriumNotConverged { iterations, residual, .. }) => Err(Error::EquilibriumNotConverged {
            iterations,
            residual,
            trace: residual_trace,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub lambda: f64,
}

/// Buffers of one equilibrium solve, reusable across solves of the same model.
#[derive(Debug, Clone, Default)]
pub(crate) struct Workspace {
    /// Current iterate; after a successful solve, `ρ*`.
    pub rho: Vec<DhParams>,
    target: Vec<DhParams>,
    /// Frames at `rho`.
    pub frames: FrameSet,
    pub torques: Vec<Vector3<f64>>,
    scratch: TorqueScratch,
}

impl Workspace {
    /// Sets the iterate to `ρ₀`, with the rotational values of `warm` if given.
    pub fn start(&mut self, rho0: &[DhParams], warm: Option<&[DhParams]>) {
        self.rho.clear();
        self.rho.extend_from_slice(rho0);
        if let Some(w) = warm {
            for (r, w) in self.rho.iter_mut().zip(w) {
                r.alpha = w.alpha;
                r.beta = w.beta;
                r.theta = w.theta;
            }
        }
    }

    /// Frames and torques at the current iterate.
    pub fn evaluate(&mut self, model: &RobotModel, q: &[f64], masses: &[PointMass]) {
        forward_kinematics_into(model, q, &self.rho, &mut self.frames);
        self.scratch.compute(model, &self.frames, masses, &model.gravity, &mut self.torques);
    }

    /// Frames and torques at an arbitrary `rho`, leaving the iterate alone.
    pub fn evaluate_with(&mut self, model: &RobotModel, q: &[f64], rho: &[DhParams], masses: &[PointMass]) {
        forward_kinematics_into(model, q, rho, &mut self.frames);
        self.scratch.compute(model, &self.frames, masses, &model.gravity, &mut self.torques);
    }

    /// Runs the damped iteration from the current iterate. `observe` sees the
    /// frames and residual of every evaluated iterate.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &mut self,
        model: &RobotModel,
        q: &[f64],
        rho0: &DhParamSet,
        compliance: &ComplianceSet,
        masses: &[PointMass],
        settings: &SolverSettings,
        mut observe: impl FnMut(&FrameSet, f64),
    ) -> Result<SolveStats> {
        self.target.clear();
        self.target.extend_from_slice(rho0);
        let mut lambda = settings.lambda;
        let mut increases = 0;
        let mut previous = f64::INFINITY;
        let mut iterations = 0;
        loop {
            self.evaluate(model, q, masses);
            apply_compliance_into(rho0, compliance, &self.torques, &mut self.target);
            let residual = rotational_residual(&self.target, &self.rho);
            iterations += 1;
            if !residual.is_finite() {
                return Err(Error::EquilibriumNotConverged {
                    iterations,
                    residual,
                    trace: Vec::new(),
                });
            }
            observe(&self.frames, residual);
            if iterations > 1 {
                if residual > previous {
                    increases += 1;
                } else {
                    increases = 0;
                }
            }
            previous = residual;
            if residual <= settings.tol {
                return Ok(SolveStats {
                    iterations,
                    residual,
                    lambda,
                });
            }
            if iterations >= settings.max_iter {
                return Err(Error::EquilibriumNotConverged {
                    iterations,
                    residual,
                    trace: Vec::new(),
                });
            }
            if settings.adaptive && increases >= 2 && lambda > LAMBDA_FLOOR {
                lambda = (lambda * 0.5).max(LAMBDA_FLOOR);
                increases = 0;
            }
            if lambda == 1.0 {
                for (r, t) in self.rho.iter_mut().zip(&self.target) {
                    r.alpha = t.alpha;
                    r.beta = t.beta;
                    r.theta = t.theta;
                }
            } else {
                let keep = 1.0 - lambda;
                for (r, t) in self.rho.iter_mut().zip(&self.target) {
                    r.alpha = keep * r.alpha + lambda * t.alpha;
                    r.beta = keep * r.beta + lambda * t.beta;
                    r.theta = keep * r.theta + lambda * t.theta;
                }
            }
        }
    }
}

/// `max |ρ − ρ(ρ₀, C, τ(F(q, ρ)))|` for an arbitrary `ρ`.
pub fn equilibrium_residual(
    model: &RobotModel,
    q: &[f64],
    rho: &DhParamSet,
    rho0: &DhParamSet,
    compliance: &ComplianceSet,
    masses: &[PointMass],
) -> Result<f64> {
    check_elastic_dims(model, q, rho0, compliance, masses)?;
    let mut frames = FrameSet::with_len(model.links.len());
    forward_kinematics_into(model, q, rho, &mut frames);
    let torques = gravity_torques(model, &frames, masses, &model.gravity);
    let target = apply_compliance(rho0, compliance, &torques);
    Ok(rotational_residual(&target, rho))
}

/// Non-geometric forward kinematics `f*(q) = f(q, ρ*(q, ρ₀, C, ν))`.
pub fn elastic_forward_kinematics(
    model: &RobotModel,
    q: &[f64],
    params: &CalibrationParams,
    settings: &SolverSettings,
) -> Result<FrameSet> {
    solve_equilibrium(
        model,
        q,
        &params.rho0,
        &params.compliance,
        &params.masses,
        settings,
    )
    .map(|r| r.frames)
}
