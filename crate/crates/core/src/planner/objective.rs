use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_into, point_jacobian, DhParamSet, FrameSet};
use crate::model::RobotModel;

use super::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldSphere {
    /// Base frame (m).
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Weights of `H(Q)` and the obstacle set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerObjective {
    pub smoothness: f64,
    pub goal: f64,
    pub obstacle: f64,
    /// Extra clearance added to every sphere pair (m).
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub obstacles: Vec<WorldSphere>,
}

impl Default for PlannerObjective {
    fn default() -> Self {
        Self {
            smoothness: 1.0,
            goal: 100.0,
            obstacle: 1000.0,
            margin: 0.02,
            obstacles: Vec::new(),
        }
    }
}

impl PlannerObjective {
    pub fn validate(&self) -> Result<()> {
        let w = [self.smoothness, self.goal, self.obstacle, self.margin];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("objective weights must be non-negative".into()));
        }
        if self.obstacles.iter().any(|o| !(o.radius >= 0.0) || !o.center.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("invalid obstacle sphere".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    /// Final waypoint pinned to this configuration.
    Configuration(crate::kinematics::Configuration),
    /// Final waypoint free; `link` origin (plus `offset` in the link frame)
    /// is pulled to `target` in the base frame.
    Position {
        link: usize,
        #[serde(default)]
        offset: Vector3<f64>,
        target: Vector3<f64>,
    },
}

impl Goal {
    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        match self {
            Goal::Configuration(q) if q.len() != model.n_joints() => {
                Err(Error::ModelMismatch("goal configuration has wrong length".into()))
            }
            Goal::Position { link, .. } if *link >= model.n_links() => {
                Err(Error::ModelMismatch(format!("goal link {link} out of range")))
            }
            _ => Ok(()),
        }
    }
}

pub(crate) struct ObjectiveEval<'a> {
    pub model: &'a RobotModel,
    pub objective: &'a PlannerObjective,
    pub goal: &'a Goal,
}

impl ObjectiveEval<'_> {
    /// Recomputes `frames` for every waypoint and returns `H(Q)`.
    pub fn value(&self, path: &Path, rho: &[DhParamSet], frames: &mut [FrameSet]) -> f64 {
        let o = self.objective;
        for ((q, r), f) in path.waypoints.iter().zip(rho).zip(frames.iter_mut()) {
            forward_kinematics_into(self.model, q, r, f);
        }
        let mut h = 0.0;
        if o.smoothness > 0.0 {
            let s: f64 = path
                .waypoints
                .windows(2)
                .map(|w| w[0].iter().zip(w[1].iter()).map(|(a, b)| (b - a) * (b - a)).sum::<f64>())
                .sum();
            h += o.smoothness * s;
        }
        if let (Goal::Position { link, offset, target }, false) = (self.goal, path.fixed_end) {
            let last = &frames[frames.len() - 1];
            let p = last.frames[*link].transform_point(offset);
            h += o.goal * (p - target).norm_squared();
        }
        if o.obstacle > 0.0 && !o.obstacles.is_empty() {
            let pen: f64 = frames.iter().map(|f| self.penetration(f, |_, _, _, _| {})).sum();
            h += o.obstacle * pen;
        }
        h
    }

    /// Sum of squared penetrations; `each` sees (link, local center,
    /// ∂pen/∂center, Gauss–Newton curvature w.r.t. the center) for every
    /// robot sphere in contact.
    fn penetration(
        &self,
        frames: &FrameSet,
        mut each: impl FnMut(usize, &Vector3<f64>, Vector3<f64>, Matrix3<f64>),
    ) -> f64 {
        let o = self.objective;
        let mut total = 0.0;
        for s in &self.model.spheres.spheres {
            let c = frames.frames[s.link].transform_point(&s.center);
            let mut g = Vector3::zeros();
            let mut nn = Matrix3::zeros();
            let mut touched = false;
            for w in &o.obstacles {
                let d = c - w.center;
                let dist = d.norm();
                let p = s.radius + w.radius + o.margin - dist;
                if p > 0.0 {
                    total += p * p;
                    if dist > 0.0 {
                        let n = d / dist;
                        g -= 2.0 * p * n;
                        nn += 2.0 * n * n.transpose();
                        touched = true;
                    }
                }
            }
            if touched {
                each(s.link, &s.center, g, nn);
            }
        }
        total
    }

    /// Gauss–Newton curvature of the goal and obstacle terms for every free
    /// waypoint.
    pub fn curvature(&self, path: &Path, frames: &[FrameSet]) -> Vec<DMatrix<f64>> {
        let o = self.objective;
        let n = path.waypoints.len();
        let dof = self.model.n_joints();
        path.free_range()
            .map(|k| {
                let mut h = DMatrix::zeros(dof, dof);
                if let (Goal::Position { link, offset, .. }, true) = (self.goal, k + 1 == n && !path.fixed_end) {
                    let jac = point_jacobian(self.model, &frames[k], *link, offset);
                    h += 2.0 * o.goal * jac.tr_mul(&jac);
                }
                if o.obstacle > 0.0 && !o.obstacles.is_empty() {
                    self.penetration(&frames[k], |link, center, _, nn| {
                        let jac = point_jacobian(self.model, &frames[k], link, center);
                        h += o.obstacle * jac.transpose() * nn * &jac;
                    });
                }
                h
            })
            .collect()
    }

    /// `∂H/∂q_k` for every free waypoint, with DH values held constant.
    pub fn gradient(&self, path: &Path, frames: &[FrameSet]) -> Vec<DVector<f64>> {
        let o = self.objective;
        let n = path.waypoints.len();
        let free = path.free_range();
        let dof = self.model.n_joints();
        free.map(|k| {
            let mut g = DVector::zeros(dof);
            if o.smoothness > 0.0 {
                let q = &path.waypoints[k];
                let prev = &path.waypoints[k - 1];
                for j in 0..dof {
                    let mut v = q[j] - prev[j];
                    if k + 1 < n {
                        v -= path.waypoints[k + 1][j] - q[j];
                    }
                    g[j] += 2.0 * o.smoothness * v;
                }
            }
            if let (Goal::Position { link, offset, target }, true) = (self.goal, k + 1 == n && !path.fixed_end) {
                let p = frames[k].frames[*link].transform_point(offset);
                let jac = point_jacobian(self.model, &frames[k], *link, offset);
                g += 2.0 * o.goal * jac.transpose() * (p - target);
            }
            if o.obstacle > 0.0 && !o.obstacles.is_empty() {
                self.penetration(&frames[k], |link, center, dc, _| {
                    let jac = point_jacobian(self.model, &frames[k], link, center);
                    g += o.obstacle * jac.transpose() * dc;
                });
            }
            g
        })
        .collect()
    }
}
