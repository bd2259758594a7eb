//! Forward kinematics, calibration and planning support for elastic
//! kinematic trees.
//!
//! Rotational DH parameters deflect linearly with the gravity torques acting
//! on each link, `ρ = ρ₀ + C·τ(F(q, ρ))`, and the resulting implicit
//! equation is solved by a damped fixed-point iteration. On top of that sit
//! MAP calibration from external marker measurements, measurement pose
//! selection, and a trajectory optimizer that carries the deflections along
//! its outer loop.

pub mod calibration;
pub mod elastic;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod model;
pub mod planner;
pub mod selection;
pub mod synthetic;
pub mod transform;

pub use error::{Error, Result};
pub use kinematics::{forward_kinematics, Configuration, DhLink, DhParamSet, DhParams, FrameSet, JointBinding};
pub use model::RobotModel;
pub use transform::Transform;
