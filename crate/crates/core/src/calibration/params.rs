//! The calibration parameter vector Θ = [ρ₀, C, ν, c], its flat layout,
//! active masks and the Gaussian prior.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::elastic::{Compliance, ComplianceSet, PointMass};
use crate::error::{Error, Result};
use crate::kinematics::{DhParamSet, DhParams, JointBinding};
use crate::model::RobotModel;
use crate::transform::Transform;

/// Frames closing the measurement loop: the robot base in the camera-system
/// frame and the marker positions in the two TCP frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureFrames {
    /// m
    pub camera_position: Vector3<f64>,
    /// Axis-angle vector (rad), |o| < π.
    pub camera_orientation: Vector3<f64>,
    /// m, in the right TCP frame
    pub marker_right: Vector3<f64>,
    /// m, in the left TCP frame
    pub marker_left: Vector3<f64>,
}

impl Default for ClosureFrames {
    fn default() -> Self {
        Self {
            camera_position: Vector3::zeros(),
            camera_orientation: Vector3::zeros(),
            marker_right: Vector3::zeros(),
            marker_left: Vector3::zeros(),
        }
    }
}

impl ClosureFrames {
    /// `T_c0`, the transform from the robot base into the camera-system frame.
    pub fn camera_frame(&self) -> Transform {
        Transform::from_axis_angle(self.camera_position, self.camera_orientation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.camera_orientation.norm() >= PI {
            return Err(Error::InvalidInput(
                "camera orientation must be an axis-angle vector with norm < π".into(),
            ));
        }
        Ok(())
    }

    /// Maps the orientation back into the canonical chart |o| < π.
    pub fn canonicalize(&mut self) {
        let n = self.camera_orientation.norm();
        if n >= PI {
            let wrapped = n - 2.0 * PI * ((n + PI) / (2.0 * PI)).floor();
            self.camera_orientation *= wrapped / n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub rho0: DhParamSet,
    /// rad/(N·m)
    pub compliance: ComplianceSet,
    pub masses: Vec<PointMass>,
    pub closure: ClosureFrames,
}

impl CalibrationParams {
    /// The model's own parameters (including its compliances).
    pub fn from_model(model: &RobotModel) -> Self {
        Self {
            rho0: model.nominal_rho(),
            compliance: model.compliance.clone(),
            masses: model.masses.clone(),
            closure: model.closure,
        }
    }

    pub fn len(&self) -> usize {
        self.rho0.len() * 8 + self.masses.len() * 4 + 12
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat layout: per link `[d, r, α, β, θ]`, per link `[cα, cβ, cθ]`,
    /// per mass `[m, wx, wy, wz]`, then `[p_c, o_c, p_r, p_l]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for p in self.rho0.iter() {
            v.extend_from_slice(&p.to_array());
        }
        for c in self.compliance.iter() {
            v.extend_from_slice(&[c.alpha, c.beta, c.theta]);
        }
        for m in &self.masses {
            v.extend_from_slice(&[m.mass, m.position.x, m.position.y, m.position.z]);
        }
        let c = &self.closure;
        for vec in [c.camera_position, c.camera_orientation, c.marker_right, c.marker_left] {
            v.extend_from_slice(vec.as_slice());
        }
        v
    }

    /// Overwrites all values from a flat vector in [`flatten`](Self::flatten) layout.
    pub fn assign(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::ModelMismatch(format!(
                "flat parameter vector of length {} for layout of length {}",
                v.len(),
                self.len()
            )));
        }
        let mut it = v.iter().copied();
        let mut next = || it.next().expect("length checked");
        for p in self.rho0.iter_mut() {
            *p = DhParams::new(next(), next(), next(), next(), next());
        }
        for c in self.compliance.iter_mut() {
            *c = Compliance::new(next(), next(), next());
        }
        for m in self.masses.iter_mut() {
            m.mass = next();
            m.position = Vector3::new(next(), next(), next());
        }
        let c = &mut self.closure;
        for vec in [
            &mut c.camera_position,
            &mut c.camera_orientation,
            &mut c.marker_right,
            &mut c.marker_left,
        ] {
            *vec = Vector3::new(next(), next(), next());
        }
        Ok(())
    }

    pub fn with_values(&self, v: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.assign(v)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Length,
    Angle,
    Compliance,
    Mass,
}

/// Parameter groups switched on and off together in ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// Camera base frame and marker offsets.
    Closure,
    /// The DH value each joint adds its offset to (θ or d).
    JointOffsets,
    /// All remaining DH values.
    Geometry,
    /// Compliance about the joint axis, cθ.
    JointElasticity,
    /// Compliances perpendicular to the joint axis, cα and cβ.
    TransversalElasticity,
    /// Point masses and their positions.
    Masses,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Closure,
        ParamGroup::JointOffsets,
        ParamGroup::Geometry,
        ParamGroup::JointElasticity,
        ParamGroup::TransversalElasticity,
        ParamGroup::Masses,
    ];

    /// Everything except the mass model.
    pub fn full_model() -> BTreeSet<ParamGroup> {
        Self::ALL.into_iter().filter(|g| *g != ParamGroup::Masses).collect()
    }

    pub fn geometric_model() -> BTreeSet<ParamGroup> {
        [ParamGroup::Closure, ParamGroup::JointOffsets, ParamGroup::Geometry]
            .into_iter()
            .collect()
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "closure" => ParamGroup::Closure,
            "joint_offsets" | "offsets" => ParamGroup::JointOffsets,
            "geometry" | "dh" => ParamGroup::Geometry,
            "joint_elasticity" => ParamGroup::JointElasticity,
            "transversal_elasticity" => ParamGroup::TransversalElasticity,
            "masses" => ParamGroup::Masses,
            other => return Err(Error::InvalidInput(format!("unknown parameter group '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
    pub group: ParamGroup,
    pub link: Option<usize>,
}

/// Names, kinds and groups of every entry of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub entries: Vec<ParamInfo>,
}

impl ParamLayout {
    pub fn new(model: &RobotModel, params: &CalibrationParams) -> Self {
        let mut entries = Vec::with_capacity(params.len());
        let mut push = |name: String, kind, group, link| {
            entries.push(ParamInfo {
                name,
                kind,
                group,
                link,
            })
        };
        for (i, link) in model.links.iter().enumerate() {
            let offset = |b| {
                if link.binding == b {
                    ParamGroup::JointOffsets
                } else {
                    ParamGroup::Geometry
                }
            };
            let n = &link.name;
            push(format!("{n}.d"), ParamKind::Length, offset(JointBinding::Prismatic), Some(i));
            push(format!("{n}.r"), ParamKind::Length, ParamGroup::Geometry, Some(i));
            push(format!("{n}.alpha"), ParamKind::Angle, ParamGroup::Geometry, Some(i));
            push(format!("{n}.beta"), ParamKind::Angle, ParamGroup::Geometry, Some(i));
            push(format!("{n}.theta"), ParamKind::Angle, offset(JointBinding::Revolute), Some(i));
        }
        for (i, link) in model.links.iter().enumerate() {
            let n = &link.name;
            push(format!("{n}.c_alpha"), ParamKind::Compliance, ParamGroup::TransversalElasticity, Some(i));
            push(format!("{n}.c_beta"), ParamKind::Compliance, ParamGroup::TransversalElasticity, Some(i));
            push(format!("{n}.c_theta"), ParamKind::Compliance, ParamGroup::JointElasticity, Some(i));
        }
        for (k, m) in params.masses.iter().enumerate() {
            push(format!("mass{k}.m"), ParamKind::Mass, ParamGroup::Masses, Some(m.link));
            for axis in ["x", "y", "z"] {
                push(format!("mass{k}.w{axis}"), ParamKind::Length, ParamGroup::Masses, Some(m.link));
            }
        }
        for (name, kind) in [
            ("camera_position", ParamKind::Length),
            ("camera_orientation", ParamKind::Angle),
            ("marker_right", ParamKind::Length),
            ("marker_left", ParamKind::Length),
        ] {
            for axis in ["x", "y", "z"] {
                push(format!("{name}.{axis}"), kind, ParamGroup::Closure, None);
            }
        }
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mask(&self, groups: &BTreeSet<ParamGroup>) -> ActiveMask {
        ActiveMask(self.entries.iter().map(|e| groups.contains(&e.group)).collect())
    }
}

/// Which entries of the flat parameter vector are optimized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveMask(pub Vec<bool>);

impl ActiveMask {
    pub fn active_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|a| **a).count()
    }
}

/// Prior standard deviations per parameter kind. Compliance in rad/(N·m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorWidths {
    pub length: f64,
    pub angle: f64,
    pub compliance: f64,
    pub mass: f64,
}

impl Default for PriorWidths {
    fn default() -> Self {
        Self {
            length: 0.1,
            angle: 0.2,
            // 0.1 rad/kNm
            compliance: 1e-4,
            mass: 1.0,
        }
    }
}

/// Gaussian prior N(Θ_p, diag σ_p²) and the measurement noise σ_m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: CalibrationParams,
    pub sigma: Vec<f64>,
    /// m
    pub sigma_m: f64,
}

pub const DEFAULT_SIGMA_M: f64 = 0.5e-3;

impl Prior {
    pub fn new(model: &RobotModel, mean: CalibrationParams, widths: &PriorWidths, sigma_m: f64) -> Self {
        let layout = ParamLayout::new(model, &mean);
        let sigma = layout
            .entries
            .iter()
            .map(|e| match e.kind {
                ParamKind::Length => widths.length,
                ParamKind::Angle => widths.angle,
                ParamKind::Compliance => widths.compliance,
                ParamKind::Mass => widths.mass,
            })
            .collect();
        Self { mean, sigma, sigma_m }
    }

    /// Prior centred on the nominal (rigid) model: the model's DH values,
    /// masses and closure frames, with zero compliance.
    pub fn nominal(model: &RobotModel, widths: &PriorWidths, sigma_m: f64) -> Self {
        let mut mean = CalibrationParams::from_model(model);
        mean.compliance = ComplianceSet::zeros(model.n_links());
        Self::new(model, mean, widths, sigma_m)
    }

    pub fn validate(&self, mask: &ActiveMask) -> Result<()> {
        if self.sigma.len() != self.mean.len() || mask.0.len() != self.sigma.len() {
            return Err(Error::ModelMismatch("prior, mask and parameter layout differ in length".into()));
        }
        if !(self.sigma_m > 0.0) {
            return Err(Error::InvalidInput("sigma_m must be positive".into()));
        }
        if mask.active_indices().iter().any(|&i| !(self.sigma[i] > 0.0)) {
            return Err(Error::InvalidInput("active parameters need a positive prior sigma".into()));
        }
        Ok(())
    }

    /// `(Θ − Θ_p)ᵀ Λ_p⁻¹ (Θ − Θ_p)` over the active entries.
    pub fn quadratic(&self, theta: &CalibrationParams, mask: &ActiveMask) -> f64 {
        let v = theta.flatten();
        let m = self.mean.flatten();
        mask.active_indices()
            .into_iter()
            .map(|i| ((v[i] - m[i]) / self.sigma[i]).powi(2))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_chart_wraps_large_rotations() {
        let mut c = ClosureFrames {
            camera_orientation: Vector3::new(0.0, 0.0, 1.5 * PI),
            ..Default::default()
        };
        let before = c.camera_frame();
        c.canonicalize();
        assert!(c.camera_orientation.norm() < PI);
        assert!((c.camera_orientation.z + 0.5 * PI).abs() < 1e-12);
        assert!((before.rotation - c.camera_frame().rotation).norm() < 1e-12);
    }
}
