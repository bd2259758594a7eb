//! Geometric kinematics of tree-structured robots described by five-parameter
//! DH links (`Rot_y(β)·Rot_x(α)·Trans_x(r)·Rot_z(θ)·Trans_z(d)`).
//!
//! Links are stored in a flat array sorted so that every parent precedes its
//! children, so a single forward pass produces every frame of every branch.

use std::ops::{Deref, DerefMut};

use nalgebra::{Matrix3, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RobotModel;
use crate::transform::Transform;

/// The five DH values of one link. Lengths in m, angles in rad.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DhParams {
    pub d: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

impl DhParams {
    pub fn new(d: f64, r: f64, alpha: f64, beta: f64, theta: f64) -> Self {
        Self {
            d,
            r,
            alpha,
            beta,
            theta,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.d, self.r, self.alpha, self.beta, self.theta]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    /// Largest absolute difference over the five entries.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// How the configuration vector enters a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JointBinding {
    /// Fixed link.
    #[default]
    None,
    /// Joint value is added to θ.
    Revolute,
    /// Joint value is added to d.
    Prismatic,
}

/// One link of the kinematic tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhLink {
    pub name: String,
    pub params: DhParams,
    pub binding: JointBinding,
    pub joint_index: Option<usize>,
    /// `None` attaches the link to the robot base.
    pub parent: Option<usize>,
}

/// One set of DH values per link, in link order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DhParamSet(pub Vec<DhParams>);

impl Deref for DhParamSet {
    type Target = Vec<DhParams>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl DerefMut for DhParamSet {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.0
    }
}

impl DhParamSet {
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other.iter())
            .fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }
}

/// Joint values: rad for revolute joints, m for prismatic ones.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<f64>);

impl Deref for Configuration {
    type Target = Vec<f64>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl DerefMut for Configuration {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.0
    }
}

impl From<Vec<f64>> for Configuration {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Frames of all links expressed in the base frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameSet {
    pub frames: Vec<Transform>,
}

impl FrameSet {
    pub fn with_len(n: usize) -> Self {
        Self {
            frames: vec![Transform::identity(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn origin(&self, link: usize) -> Vector3<f64> {
        self.frames[link].translation
    }

    pub fn x_axis(&self, link: usize) -> Vector3<f64> {
        self.frames[link].rotation.column(0).into_owned()
    }

    pub fn y_axis(&self, link: usize) -> Vector3<f64> {
        self.frames[link].rotation.column(1).into_owned()
    }

    pub fn z_axis(&self, link: usize) -> Vector3<f64> {
        self.frames[link].rotation.column(2).into_owned()
    }

    /// Frame of the parent of a link, the base frame for root links.
    pub fn parent_frame(&self, parent: Option<usize>) -> Transform {
        parent.map_or_else(Transform::identity, |p| self.frames[p])
    }
}

/// Joint value offsets applied to θ or d of a link.
fn joint_offset(link: &DhLink, q: &[f64]) -> (f64, f64) {
    match (link.binding, link.joint_index) {
        (JointBinding::Revolute, Some(j)) => (q[j], 0.0),
        (JointBinding::Prismatic, Some(j)) => (0.0, q[j]),
        _ => (0.0, 0.0),
    }
}

/// Link transform for explicit DH values and the joint offset of its binding.
#[inline]
pub fn dh_matrix(p: &DhParams, binding: JointBinding, q_value: f64) -> Transform {
    let (theta, d) = match binding {
        JointBinding::Revolute => (p.theta + q_value, p.d),
        JointBinding::Prismatic => (p.theta, p.d + q_value),
        JointBinding::None => (p.theta, p.d),
    };
    let (sa, ca) = p.alpha.sin_cos();
    let (sb, cb) = p.beta.sin_cos();
    let (st, ct) = theta.sin_cos();
    // Rot_y(β)·Rot_x(α)
    let r1 = Matrix3::new(cb, sb * sa, sb * ca, 0.0, ca, -sa, -sb, cb * sa, cb * ca);
    let rz = Matrix3::new(ct, -st, 0.0, st, ct, 0.0, 0.0, 0.0, 1.0);
    let translation = r1.column(0) * p.r + r1.column(2) * d;
    Transform {
        rotation: r1 * rz,
        translation,
    }
}

/// Transform from the parent frame to the link frame.
pub fn dh_transform(link: &DhLink, q_value: f64) -> Transform {
    dh_matrix(&link.params, link.binding, q_value)
}

fn check_dims(model: &RobotModel, q: &[f64], rho: &DhParamSet) -> Result<()> {
    if rho.len() != model.links.len() {
        return Err(Error::ModelMismatch(format!(
            "{} DH parameter sets for {} links",
            rho.len(),
            model.links.len()
        )));
    }
    if q.len() != model.n_joints() {
        return Err(Error::ModelMismatch(format!(
            "configuration of length {} for {} joints",
            q.len(),
            model.n_joints()
        )));
    }
    Ok(())
}

/// Frames of all links for configuration `q` and DH values `rho`.
pub fn forward_kinematics(model: &RobotModel, q: &[f64], rho: &DhParamSet) -> Result<FrameSet> {
    check_dims(model, q, rho)?;
    let mut frames = FrameSet::with_len(model.links.len());
    forward_kinematics_into(model, q, rho, &mut frames);
    Ok(frames)
}

/// Unchecked forward pass into a preallocated frame set.
pub(crate) fn forward_kinematics_into(
    model: &RobotModel,
    q: &[f64],
    rho: &[DhParams],
    out: &mut FrameSet,
) {
    out.frames.resize(model.links.len(), Transform::identity());
    for (i, link) in model.links.iter().enumerate() {
        let (dq_theta, dq_d) = joint_offset(link, q);
        let local = dh_matrix(&rho[i], link.binding, dq_theta + dq_d);
        out.frames[i] = match link.parent {
            Some(p) => &out.frames[p] * &local,
            None => local,
        };
    }
}

/// Jacobian of a point rigidly attached to `target_link` (given in that
/// link's frame) with respect to all joints, holding the DH values fixed.
///
/// Columns of joints that are not ancestors of `target_link` are zero.
pub fn point_jacobian(
    model: &RobotModel,
    frames: &FrameSet,
    target_link: usize,
    local_point: &Vector3<f64>,
) -> Matrix3xX<f64> {
    let mut jac = Matrix3xX::zeros(model.n_joints());
    let point = frames.frames[target_link].transform_point(local_point);
    let mut link = Some(target_link);
    while let Some(k) = link {
        let l = &model.links[k];
        if let Some(j) = l.joint_index {
            let z = frames.z_axis(k);
            // The θ rotation acts about the line through the frame origin along ẑ.
            let col = match l.binding {
                JointBinding::Revolute => z.cross(&(point - frames.origin(k))),
                JointBinding::Prismatic => z,
                JointBinding::None => Vector3::zeros(),
            };
            jac.set_column(j, &col);
        }
        link = l.parent;
    }
    jac
}

/// `∂(origin of target_link)/∂q` with `rho` frozen.
pub fn position_jacobian(
    model: &RobotModel,
    q: &[f64],
    rho: &DhParamSet,
    target_link: usize,
) -> Result<Matrix3xX<f64>> {
    if target_link >= model.links.len() {
        return Err(Error::InvalidInput(format!(
            "target link {target_link} out of range"
        )));
    }
    let frames = forward_kinematics(model, q, rho)?;
    Ok(point_jacobian(model, &frames, target_link, &Vector3::zeros()))
}
