//! Measurement pose selection: rejection sampling of configurations that are
//! free of self-collision and leave the markers visible to enough cameras,
//! followed by ordering the poses into short visiting tours.

mod occlusion;
mod sampling;
mod tsp;

pub use occlusion::{marker_visibility, ray_sphere_blocked, segment_sphere_distance, self_collision};
pub(crate) use occlusion::world_spheres;
pub use sampling::{sample_feasible, sample_uniform, SamplingOptions, SamplingOutcome};
pub use tsp::{order_poses, tour_cost, two_opt_improvement, JointMetric, PoseBatch};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub link: usize,
    /// m, in the link frame
    pub center: Vector3<f64>,
    /// m
    pub radius: f64,
}

/// Union-of-spheres approximation of the robot, used both for self-collision
/// and for marker occlusion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SphereModel {
    pub spheres: Vec<Sphere>,
}

impl SphereModel {
    pub fn validate(&self, n_links: usize) -> Result<()> {
        for s in &self.spheres {
            if s.link >= n_links || !(s.radius > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "sphere on link {} with radius {} is invalid",
                    s.link, s.radius
                )));
            }
        }
        Ok(())
    }
}

/// External tracking cameras, positions in the camera-system frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<Vector3<f64>>,
    /// Cameras that must see a marker for it to count as visible.
    pub min_visible: usize,
    /// Require both markers visible instead of at least one.
    #[serde(default)]
    pub require_both_markers: bool,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            cameras: Vec::new(),
            min_visible: 4,
            require_both_markers: false,
        }
    }
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Ok(());
        }
        if self.min_visible == 0 || self.min_visible > self.cameras.len() {
            return Err(Error::InvalidInput(format!(
                "min_visible = {} with {} cameras",
                self.min_visible,
                self.cameras.len()
            )));
        }
        Ok(())
    }
}
