use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationParams, ClosureFrames, Prior, PriorWidths, DEFAULT_SIGMA_M};
use crate::elastic::{Compliance, ComplianceSet, PointMass};
use crate::error::{Error, Result};
use crate::kinematics::{DhLink, DhParamSet};
use crate::model::{JointLimit, RobotModel, TcpLinks};
use crate::planner::PlanningProblem;
use crate::selection::{CameraRig, SphereModel};

use super::{read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComplianceUnit {
    #[serde(rename = "rad/kNm")]
    RadPerKnm,
    #[serde(rename = "rad/Nm")]
    RadPerNm,
}

impl ComplianceUnit {
    /// Multiplier from file values to rad/(N·m).
    pub fn to_internal(self) -> f64 {
        match self {
            ComplianceUnit::RadPerKnm => 1e-3,
            ComplianceUnit::RadPerNm => 1.0,
        }
    }

    fn from_internal(self) -> f64 {
        match self {
            ComplianceUnit::RadPerKnm => 1e3,
            ComplianceUnit::RadPerNm => 1.0,
        }
    }
}

/// Unit annotations every file must carry. Only `compliance` admits a choice;
/// the other entries are checked against the fixed internal units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub length: String,
    pub angle: String,
    pub mass: String,
    pub compliance: ComplianceUnit,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "m".into(),
            angle: "rad".into(),
            mass: "kg".into(),
            compliance: ComplianceUnit::RadPerKnm,
        }
    }
}

impl Units {
    fn validate(&self) -> Result<()> {
        for (what, got, want) in [
            ("length", &self.length, "m"),
            ("angle", &self.angle, "rad"),
            ("mass", &self.mass, "kg"),
        ] {
            if got != want {
                return Err(Error::InvalidInput(format!("unsupported {what} unit {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    units: Units,
    name: String,
    links: Vec<DhLink>,
    masses: Vec<PointMass>,
    compliance: Vec<Compliance>,
    /// m/s²
    gravity: Vector3<f64>,
    tcp: TcpLinks,
    closure: ClosureFrames,
    spheres: SphereModel,
    cameras: CameraRig,
    joint_limits: Vec<JointLimit>,
    velocity_limits: Vec<f64>,
}

fn compliance_from_file(c: &[Compliance], unit: ComplianceUnit) -> ComplianceSet {
    ComplianceSet(c.iter().map(|c| c.scaled(unit.to_internal())).collect())
}

fn compliance_to_file(c: &ComplianceSet, unit: ComplianceUnit) -> Vec<Compliance> {
    c.iter().map(|c| c.scaled(unit.from_internal())).collect()
}

pub fn model_from_json(s: &str) -> Result<RobotModel> {
    let f: ModelFile = serde_json::from_str(s)?;
    f.units.validate()?;
    let model = RobotModel {
        compliance: compliance_from_file(&f.compliance, f.units.compliance),
        name: f.name,
        links: f.links,
        masses: f.masses,
        gravity: f.gravity,
        tcp: f.tcp,
        closure: f.closure,
        spheres: f.spheres,
        cameras: f.cameras,
        joint_limits: f.joint_limits,
        velocity_limits: f.velocity_limits,
    };
    model.validate()?;
    Ok(model)
}

pub fn model_to_json(model: &RobotModel) -> Result<String> {
    let units = Units::default();
    let f = ModelFile {
        compliance: compliance_to_file(&model.compliance, units.compliance),
        units,
        name: model.name.clone(),
        links: model.links.clone(),
        masses: model.masses.clone(),
        gravity: model.gravity,
        tcp: model.tcp,
        closure: model.closure,
        spheres: model.spheres.clone(),
        cameras: model.cameras.clone(),
        joint_limits: model.joint_limits.clone(),
        velocity_limits: model.velocity_limits.clone(),
    };
    let mut s = serde_json::to_string_pretty(&f)?;
    s.push('\n');
    Ok(s)
}

pub fn load_model(path: &Path) -> Result<RobotModel> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn save_model(model: &RobotModel, path: &Path) -> Result<()> {
    super::write_atomic(path, model_to_json(model)?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    units: Units,
    rho0: DhParamSet,
    compliance: Vec<Compliance>,
    masses: Vec<PointMass>,
    closure: ClosureFrames,
}

impl ParamsFile {
    fn into_params(self) -> Result<CalibrationParams> {
        self.units.validate()?;
        Ok(CalibrationParams {
            compliance: compliance_from_file(&self.compliance, self.units.compliance),
            rho0: self.rho0,
            masses: self.masses,
            closure: self.closure,
        })
    }

    fn from_params(p: &CalibrationParams) -> Self {
        let units = Units::default();
        Self {
            compliance: compliance_to_file(&p.compliance, units.compliance),
            units,
            rho0: p.rho0.clone(),
            masses: p.masses.clone(),
            closure: p.closure,
        }
    }
}

pub fn params_from_json(s: &str) -> Result<CalibrationParams> {
    serde_json::from_str::<ParamsFile>(s)?.into_params()
}

pub fn params_to_json(p: &CalibrationParams) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&ParamsFile::from_params(p))?;
    s.push('\n');
    Ok(s)
}

pub fn load_params(path: &Path, model: &RobotModel) -> Result<CalibrationParams> {
    let p = params_from_json(&fs::read_to_string(path)?)?;
    if p.rho0.len() != model.n_links() || p.compliance.len() != model.n_links() {
        return Err(Error::ModelMismatch(format!(
            "parameter file has {} links, model has {}",
            p.rho0.len(),
            model.n_links()
        )));
    }
    Ok(p)
}

pub fn save_params(p: &CalibrationParams, path: &Path) -> Result<()> {
    super::write_atomic(path, params_to_json(p)?.as_bytes())
}

/// Prior description: widths per parameter class and the measurement noise.
/// Without `mean` the prior is centred on the model with zero compliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    pub units: Units,
    /// Compliance width in the file's compliance unit.
    pub widths: PriorWidths,
    /// m
    #[serde(default = "default_sigma_m")]
    pub sigma_m: f64,
    #[serde(default)]
    pub mean: Option<String>,
}

fn default_sigma_m() -> f64 {
    DEFAULT_SIGMA_M
}

impl PriorFile {
    pub fn to_prior(&self, model: &RobotModel, base_dir: &Path) -> Result<Prior> {
        self.units.validate()?;
        let widths = PriorWidths {
            compliance: self.widths.compliance * self.units.compliance.to_internal(),
            ..self.widths
        };
        match &self.mean {
            None => Ok(Prior::nominal(model, &widths, self.sigma_m)),
            Some(p) => {
                let mean = load_params(&base_dir.join(p), model)?;
                Ok(Prior::new(model, mean, &widths, self.sigma_m))
            }
        }
    }
}

pub fn load_prior(path: &Path, model: &RobotModel) -> Result<Prior> {
    let f: PriorFile = read_json(path)?;
    f.to_prior(model, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    units: Units,
    problems: Vec<PlanningProblem>,
}

pub fn load_problems(path: &Path, model: &RobotModel) -> Result<Vec<PlanningProblem>> {
    let f: ProblemFile = read_json(path)?;
    f.units.validate()?;
    for p in &f.problems {
        if p.start.len() != model.n_joints() {
            return Err(Error::ModelMismatch(format!("problem {}: start has wrong length", p.name)));
        }
        p.goal.validate(model)?;
        p.objective.validate()?;
    }
    Ok(f.problems)
}

pub fn save_problems(problems: &[PlanningProblem], path: &Path) -> Result<()> {
    write_json(
        path,
        &ProblemFile {
            units: Units::default(),
            problems: problems.to_vec(),
        },
    )
}
