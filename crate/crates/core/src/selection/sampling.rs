use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::occlusion::{marker_visibility, self_collision, world_spheres};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_into, Configuration, DhParamSet, FrameSet};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Give up after this many attempts.
    pub max_attempts: u64,
    /// Attempts drawn from one RNG stream.
    pub chunk_size: u64,
    /// Acceptance rate below which sampling is declared infeasible ...
    pub min_rate: f64,
    /// ... once at least this many attempts have been made.
    pub rate_check_after: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            max_attempts: 20_000_000,
            chunk_size: 4096,
            min_rate: 1e-6,
            rate_check_after: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOutcome {
    pub configurations: Vec<Configuration>,
    /// Attempts up to and including the last accepted one.
    pub attempts: u64,
    pub feasibility_rate: f64,
}

/// Uniform sample within the joint limits.
pub fn sample_uniform<R: Rng>(model: &RobotModel, rng: &mut R) -> Configuration {
    Configuration(
        model
            .joint_limits
            .iter()
            .map(|l| {
                if l.upper > l.lower {
                    rng.gen_range(l.lower..=l.upper)
                } else {
                    l.lower
                }
            })
            .collect(),
    )
}

/// Feasibility under the nominal kinematics and nominal closure frames.
pub(crate) fn is_feasible(model: &RobotModel, rho: &DhParamSet, q: &[f64], frames: &mut FrameSet) -> bool {
    forward_kinematics_into(model, q, rho, frames);
    if self_collision(model, frames) {
        return false;
    }
    let rig = &model.cameras;
    if rig.cameras.is_empty() {
        return true;
    }
    let world = model.closure.camera_frame();
    let spheres = world_spheres(model, frames, &world);
    let markers = [
        (model.tcp.right, world.transform_point(&frames.frames[model.tcp.right].transform_point(&model.closure.marker_right))),
        (model.tcp.left, world.transform_point(&frames.frames[model.tcp.left].transform_point(&model.closure.marker_left))),
    ];
    let visible = marker_visibility(&rig.cameras, &markers, &spheres);
    let ok = |c: &usize| *c >= rig.min_visible;
    if rig.require_both_markers {
        visible.iter().all(ok)
    } else {
        visible.iter().any(ok)
    }
}

/// Rejection sampling of feasible measurement configurations.
///
/// Attempts are split into chunks, each drawing from its own ChaCha stream
/// derived from `seed`; accepted samples are merged in attempt order, so the
/// result does not depend on the number of worker threads.
pub fn sample_feasible(model: &RobotModel, n: usize, seed: u64, options: &SamplingOptions) -> Result<SamplingOutcome> {
    if n == 0 {
        return Err(Error::InvalidInput("requested zero samples".into()));
    }
    let rho = model.nominal_rho();
    let chunk = options.chunk_size.max(1);
    let per_round = (rayon::current_num_threads() as u64).max(1) * 2;
    let mut accepted: Vec<Configuration> = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    let mut next_chunk: u64 = 0;

    loop {
        let chunks: Vec<u64> = (next_chunk..next_chunk + per_round).collect();
        next_chunk += per_round;
        let results: Vec<Vec<(u64, Configuration)>> = chunks
            .par_iter()
            .map(|&k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k);
                let mut frames = FrameSet::with_len(model.n_links());
                let mut found = Vec::new();
                for a in 0..chunk {
                    let q = sample_uniform(model, &mut rng);
                    if is_feasible(model, &rho, &q, &mut frames) {
                        found.push((a, q));
                    }
                }
                found
            })
            .collect();
        for found in results {
            for (a, q) in found {
                accepted.push(q);
                if accepted.len() == n {
                    attempts += a + 1;
                    return Ok(SamplingOutcome {
                        configurations: accepted,
                        attempts,
                        feasibility_rate: n as f64 / attempts as f64,
                    });
                }
            }
            attempts += chunk;
        }
        let rate = accepted.len() as f64 / attempts as f64;
        if attempts >= options.max_attempts || (attempts >= options.rate_check_after && rate < options.min_rate) {
            return Err(Error::Infeasible {
                attempts,
                accepted: accepted.len(),
            });
        }
    }
}
