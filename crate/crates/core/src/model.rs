//! The robot description shared by every module: link tree, mass model,
//! nominal parameters, measurement attachments and planning limits.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calibration::ClosureFrames;
use crate::elastic::{ComplianceSet, PointMass};
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, DhLink, DhParamSet, JointBinding};
use crate::selection::{CameraRig, SphereModel};

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Links carrying the right and left measurement markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpLinks {
    pub right: usize,
    pub left: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<DhLink>,
    pub masses: Vec<PointMass>,
    /// Compliances of the model in rad/(N·m). For a nominal model these are
    /// usually zero; for a generator model they are the "true" values.
    pub compliance: ComplianceSet,
    /// m/s², in the base frame.
    pub gravity: Vector3<f64>,
    pub tcp: TcpLinks,
    /// Nominal camera base frame and marker offsets.
    pub closure: ClosureFrames,
    pub spheres: SphereModel,
    pub cameras: CameraRig,
    pub joint_limits: Vec<JointLimit>,
    /// rad/s (m/s for prismatic joints).
    pub velocity_limits: Vec<f64>,
}

impl RobotModel {
    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_joints(&self) -> usize {
        self.links.iter().filter(|l| l.joint_index.is_some()).count()
    }

    pub fn tcp_links(&self) -> [usize; 2] {
        [self.tcp.right, self.tcp.left]
    }

    pub fn nominal_rho(&self) -> DhParamSet {
        DhParamSet(self.links.iter().map(|l| l.params).collect())
    }

    pub fn zero_configuration(&self) -> Configuration {
        Configuration(vec![0.0; self.n_joints()])
    }

    /// True if `ancestor` lies on the path from `link` to the base
    /// (a link counts as its own ancestor).
    pub fn is_ancestor(&self, ancestor: usize, link: usize) -> bool {
        let mut cur = Some(link);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.links[c].parent;
        }
        false
    }

    /// Link that carries joint `j`.
    pub fn joint_link(&self, j: usize) -> Option<usize> {
        self.links.iter().position(|l| l.joint_index == Some(j))
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(|m| m.mass).sum()
    }

    pub fn with_compliance(&self, compliance: ComplianceSet) -> Self {
        Self {
            compliance,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.links.len();
        if n == 0 {
            return Err(Error::InvalidInput("model has no links".into()));
        }
        let mut seen = vec![false; n];
        for (i, link) in self.links.iter().enumerate() {
            if let Some(p) = link.parent {
                if p >= i {
                    return Err(Error::InvalidInput(format!(
                        "link {i} ({}) has parent {p}; links must be topologically sorted",
                        link.name
                    )));
                }
            }
            match (link.binding, link.joint_index) {
                (JointBinding::None, None) => {}
                (JointBinding::None, Some(_)) | (_, None) => {
                    return Err(Error::InvalidInput(format!(
                        "link {i} ({}): joint index must be present exactly for bound joints",
                        link.name
                    )))
                }
                (_, Some(j)) => {
                    if j >= n || seen[j] {
                        return Err(Error::InvalidInput(format!(
                            "link {i} ({}): joint index {j} duplicated or out of range",
                            link.name
                        )));
                    }
                    seen[j] = true;
                }
            }
        }
        let dof = self.n_joints();
        if seen.iter().take(dof).any(|s| !s) {
            return Err(Error::InvalidInput(
                "joint indices must be contiguous from 0".into(),
            ));
        }
        if self.compliance.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} compliance entries for {n} links",
                self.compliance.len()
            )));
        }
        if self
            .compliance
            .iter()
            .any(|c| !(c.alpha >= 0.0 && c.beta >= 0.0 && c.theta >= 0.0))
        {
            return Err(Error::InvalidInput("compliances must be non-negative".into()));
        }
        for m in &self.masses {
            if m.link >= n || !(m.mass >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "invalid point mass on link {} ({} kg)",
                    m.link, m.mass
                )));
            }
        }
        if self.tcp.right >= n || self.tcp.left >= n {
            return Err(Error::InvalidInput("TCP link out of range".into()));
        }
        if self.joint_limits.len() != dof || self.velocity_limits.len() != dof {
            return Err(Error::InvalidInput(format!(
                "expected {dof} joint and velocity limits, got {} and {}",
                self.joint_limits.len(),
                self.velocity_limits.len()
            )));
        }
        if self.joint_limits.iter().any(|l| !(l.lower <= l.upper)) {
            return Err(Error::InvalidInput("joint limit with lower > upper".into()));
        }
        if self.velocity_limits.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("velocity limits must be positive".into()));
        }
        self.spheres.validate(n)?;
        self.cameras.validate()?;
        self.closure.validate()?;
        Ok(())
    }
}
