//! A bundled synthetic 19-joint upper body (three torso joints, two 7-joint
//! arms, a 2-joint head) and the generator used to produce datasets with a
//! known ground truth. The numbers are plausible, not measured.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_and_test, CalibrationOptions, CalibrationParams, ClosureFrames, ParamGroup, ParamLayout, Prior, Sample,
};
use crate::elastic::{solve_unchecked, Compliance, ComplianceSet, PointMass, SolverSettings};
use crate::error::{Error, Result};
use crate::io::ConvergenceCurve;
use crate::kinematics::{forward_kinematics, Configuration, DhLink, DhParams, JointBinding};
use crate::model::{JointLimit, RobotModel, TcpLinks, STANDARD_GRAVITY};
use crate::planner::{Goal, PlannerObjective, PlanningProblem, WorldSphere};
use crate::selection::{
    marker_visibility, sample_feasible, sample_uniform, CameraRig, SamplingOptions, Sphere, SphereModel,
};

struct LinkSpec {
    name: String,
    parent: Option<usize>,
    params: DhParams,
    limit: (f64, f64),
    velocity: f64,
    compliance: Compliance,
}

fn dh(d: f64, r: f64, alpha: f64, beta: f64, theta: f64) -> DhParams {
    DhParams { d, r, alpha, beta, theta }
}

/// The reference robot with its reference compliances (rad/(N·m)).
pub fn reference_model() -> RobotModel {
    let mut specs = vec![
        LinkSpec {
            name: "torso_yaw".into(),
            parent: None,
            params: dh(0.3, 0.0, 0.0, 0.0, 0.0),
            limit: (-FRAC_PI_2, FRAC_PI_2),
            velocity: 0.4,
            compliance: Compliance::new(2e-5, 2e-5, 3e-5),
        },
        LinkSpec {
            name: "torso_pitch_1".into(),
            parent: Some(0),
            params: dh(0.0, 0.0, -FRAC_PI_2, 0.0, -FRAC_PI_2),
            limit: (-0.2, 0.6),
            velocity: 0.3,
            compliance: Compliance::new(2e-5, 0.0, 3e-5),
        },
        LinkSpec {
            name: "torso_pitch_2".into(),
            parent: Some(1),
            params: dh(0.0, 0.4, 0.0, 0.0, 0.0),
            limit: (-0.6, 0.6),
            velocity: 0.35,
            compliance: Compliance::new(0.0, 3e-5, 5e-5),
        },
    ];
    let arm_alpha = [0.0, -FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2];
    let arm_d = [0.22, 0.0, 0.35, 0.0, 0.3, 0.0, 0.1];
    let arm_limit = [2.5, 2.0, 2.9, 2.0, 2.9, 2.0, 2.9];
    let arm_velocity = [1.0, 1.0, 1.5, 1.5, 2.0, 2.5, 2.5];
    let arm_c_theta = [1.0e-4, 1.0e-4, 1.5e-4, 1.5e-4, 2.0e-4, 2.0e-4, 2.0e-4];
    let arm_c_trans = [5e-5, 5e-5, 5e-5, 5e-5, 0.0, 0.0, 0.0];
    for (side, flip) in [("right", PI), ("left", 0.0)] {
        let first = specs.len();
        for k in 0..7 {
            let (parent, alpha, r) = if k == 0 { (2, flip, 0.1) } else { (first + k - 1, arm_alpha[k], 0.0) };
            specs.push(LinkSpec {
                name: format!("{side}_arm_{}", k + 1),
                parent: Some(parent),
                params: dh(arm_d[k], r, alpha, 0.0, 0.0),
                limit: (-arm_limit[k], arm_limit[k]),
                velocity: arm_velocity[k],
                compliance: Compliance::new(arm_c_trans[k], arm_c_trans[k], arm_c_theta[k]),
            });
        }
    }
    specs.push(LinkSpec {
        name: "head_pan".into(),
        parent: Some(2),
        params: dh(0.15, 0.0, 0.0, FRAC_PI_2, 0.0),
        limit: (-1.2, 1.2),
        velocity: 3.0,
        compliance: Compliance::new(0.0, 0.0, 1e-4),
    });
    specs.push(LinkSpec {
        name: "head_tilt".into(),
        parent: Some(17),
        params: dh(0.0, 0.0, -FRAC_PI_2, 0.0, 0.0),
        limit: (-0.6, 0.6),
        velocity: 3.0,
        compliance: Compliance::new(0.0, 0.0, 1e-4),
    });

    let links: Vec<DhLink> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| DhLink {
            name: s.name.clone(),
            params: s.params,
            binding: JointBinding::Revolute,
            joint_index: Some(i),
            parent: s.parent,
        })
        .collect();

    let pm = |link, mass, x, y, z| PointMass {
        link,
        mass,
        position: Vector3::new(x, y, z),
    };
    let mut masses = vec![pm(0, 8.0, 0.0, 0.0, -0.05), pm(1, 8.0, 0.2, 0.0, 0.0), pm(2, 6.0, 0.05, 0.03, 0.0)];
    for first in [3, 10] {
        masses.extend([
            pm(first, 1.5, 0.0, 0.0, -0.05),
            pm(first + 1, 2.0, 0.0, 0.0, 0.0),
            pm(first + 2, 2.5, 0.0, 0.0, -0.17),
            pm(first + 3, 1.5, 0.0, 0.0, 0.0),
            pm(first + 4, 1.8, 0.0, 0.0, -0.15),
            pm(first + 5, 0.8, 0.0, 0.0, 0.0),
            pm(first + 6, 1.0, 0.0, 0.0, 0.05),
        ]);
    }
    masses.extend([pm(17, 0.5, 0.0, 0.0, 0.0), pm(18, 3.0, 0.05, 0.0, 0.0)]);

    let sp = |link, x, y, z, radius| Sphere {
        link,
        center: Vector3::new(x, y, z),
        radius,
    };
    let mut spheres = vec![
        sp(0, 0.0, 0.0, -0.1, 0.15),
        sp(1, 0.12, 0.0, 0.0, 0.13),
        sp(1, 0.28, 0.0, 0.0, 0.13),
        sp(2, 0.05, 0.0, 0.0, 0.12),
    ];
    for first in [3, 10] {
        spheres.extend([
            sp(first + 2, 0.0, 0.0, -0.25, 0.06),
            sp(first + 2, 0.0, 0.0, -0.1, 0.06),
            sp(first + 4, 0.0, 0.0, -0.2, 0.05),
            sp(first + 4, 0.0, 0.0, -0.08, 0.05),
            sp(first + 6, 0.0, 0.0, 0.02, 0.045),
        ]);
    }
    spheres.push(sp(17, 0.0, 0.0, 0.12, 0.11));

    let cameras = (0..6)
        .map(|k| {
            let phi = k as f64 * PI / 3.0;
            Vector3::new(0.5 + 2.5 * phi.cos(), 2.5 * phi.sin(), 2.5)
        })
        .collect();

    RobotModel {
        name: "synthetic-upper-body-19".into(),
        compliance: ComplianceSet(specs.iter().map(|s| s.compliance).collect()),
        joint_limits: specs.iter().map(|s| JointLimit::new(s.limit.0, s.limit.1)).collect(),
        velocity_limits: specs.iter().map(|s| s.velocity).collect(),
        links,
        masses,
        gravity: Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
        tcp: TcpLinks { right: 9, left: 16 },
        closure: ClosureFrames {
            camera_position: Vector3::new(0.1, -0.05, 0.02),
            camera_orientation: Vector3::new(0.0, 0.0, 0.05),
            marker_right: Vector3::new(0.03, 0.0, 0.05),
            marker_left: Vector3::new(0.03, 0.0, 0.05),
        },
        spheres: SphereModel { spheres },
        cameras: CameraRig {
            cameras,
            min_visible: 4,
            require_both_markers: false,
        },
    }
}

/// How the ground truth departs from the nominal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub seed: u64,
    /// Standard deviation of the length offsets on d and r (m).
    pub length_sigma: f64,
    /// Standard deviation of the angle offsets on α, β, θ (rad).
    pub angle_sigma: f64,
    /// Multiplier on the model's reference compliances.
    pub compliance_scale: f64,
    /// Offset of the camera base frame position (m) and orientation (rad).
    pub camera_position_offset: Vector3<f64>,
    pub camera_orientation_offset: Vector3<f64>,
    /// Standard deviation of the marker offsets (m).
    pub marker_sigma: f64,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            length_sigma: 2e-3,
            angle_sigma: 2e-3,
            compliance_scale: 1.0,
            camera_position_offset: Vector3::new(0.004, -0.003, 0.002),
            camera_orientation_offset: Vector3::new(0.002, -0.001, 0.003),
            marker_sigma: 2e-3,
        }
    }
}

impl TruthSpec {
    pub fn with_geometry_scale(&self, s: f64) -> Self {
        Self {
            length_sigma: self.length_sigma * s,
            angle_sigma: self.angle_sigma * s,
            ..*self
        }
    }
}

/// Ground-truth parameters: nominal geometry plus a fixed random offset,
/// compliances from the model scaled, masses unchanged.
pub fn ground_truth(model: &RobotModel, spec: &TruthSpec) -> CalibrationParams {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut theta = CalibrationParams::from_model(model);
    theta.compliance = model.compliance.scaled(spec.compliance_scale);
    for p in theta.rho0.0.iter_mut() {
        p.d += spec.length_sigma * normal();
        p.r += spec.length_sigma * normal();
        p.alpha += spec.angle_sigma * normal();
        p.beta += spec.angle_sigma * normal();
        p.theta += spec.angle_sigma * normal();
    }
    let c = &mut theta.closure;
    c.camera_position += spec.camera_position_offset;
    c.camera_orientation += spec.camera_orientation_offset;
    for m in [&mut c.marker_right, &mut c.marker_left] {
        for v in m.iter_mut() {
            *v += spec.marker_sigma * normal();
        }
    }
    theta
}

/// Marker positions for each configuration under `truth`, with isotropic
/// Gaussian noise. Markers that fewer than `min_visible` cameras see are
/// dropped; if neither qualifies the better-seen one is kept.
pub fn measure_dataset(
    model: &RobotModel,
    truth: &CalibrationParams,
    configurations: &[Configuration],
    sigma_m: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    if !(sigma_m >= 0.0) {
        return Err(Error::InvalidInput("noise sigma must be non-negative".into()));
    }
    let settings = truth_solver();
    let noise = Normal::new(0.0, sigma_m).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let world = truth.closure.camera_frame();
    configurations
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            if q.len() != model.n_joints() {
                return Err(Error::ModelMismatch(format!("configuration {i} has wrong length")));
            }
            let eq = solve_unchecked(model, q, &truth.rho0, &truth.compliance, &truth.masses, &settings, None)?;
            let y = crate::calibration::markers_from_frames(model, &eq.frames, &truth.closure);
            let rig = &model.cameras;
            let keep = if rig.cameras.is_empty() {
                [true, true]
            } else {
                let spheres = crate::selection::world_spheres(model, &eq.frames, &world);
                let counts = marker_visibility(&rig.cameras, &[(model.tcp.right, y[0]), (model.tcp.left, y[1])], &spheres);
                let ok = [counts[0] >= rig.min_visible, counts[1] >= rig.min_visible];
                if ok[0] || ok[1] {
                    ok
                } else {
                    [counts[0] >= counts[1], counts[0] < counts[1]]
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut noisy = |v: Vector3<f64>| v + Vector3::from_fn(|_, _| noise.sample(&mut rng));
            let yr = noisy(y[0]);
            let yl = noisy(y[1]);
            Ok(Sample {
                q: q.clone(),
                y_right: keep[0].then_some(yr),
                y_left: keep[1].then_some(yl),
            })
        })
        .collect()
}

/// Settings for generating measurements, tighter than any consumer's.
pub fn truth_solver() -> SolverSettings {
    SolverSettings {
        tol: 1e-14,
        max_iter: 1000,
        ..SolverSettings::default()
    }
}

/// Test error of the nominal model after fitting only the closure frames.
pub fn nominal_test_error(
    model: &RobotModel,
    train: &[Sample],
    test: &[Sample],
    prior: &Prior,
    options: &CalibrationOptions,
) -> Result<f64> {
    let layout = ParamLayout::new(model, &prior.mean);
    let mask = layout.mask(&[ParamGroup::Closure].into_iter().collect());
    let report = calibrate_and_test(model, train, test, prior, &mask, options)?;
    Ok(report.test_error.map(|e| e.combined.mean).unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSearch {
    pub geometry_scale: f64,
    /// Mean nominal test error at that scale (m).
    pub nominal_error: f64,
    pub steps: Vec<(f64, f64)>,
}

/// Finds a geometry scale for `base` whose nominal (closure-only) test error
/// falls inside `[lo, hi]`. The error grows about linearly with the scale,
/// so the search rescales proportionally and falls back to bisection once
/// the target is bracketed.
#[allow(clippy::too_many_arguments)]
pub fn search_perturbation_scale(
    model: &RobotModel,
    base: &TruthSpec,
    train_q: &[Configuration],
    test_q: &[Configuration],
    sigma_m: f64,
    seed: u64,
    prior: &Prior,
    options: &CalibrationOptions,
    range: (f64, f64),
) -> Result<ScaleSearch> {
    let (lo, hi) = range;
    let target = 0.5 * (lo + hi);
    let mut steps = Vec::new();
    let mut eval = |s: f64| -> Result<f64> {
        let truth = ground_truth(model, &base.with_geometry_scale(s));
        let train = measure_dataset(model, &truth, train_q, sigma_m, seed)?;
        let test = measure_dataset(model, &truth, test_q, sigma_m, seed ^ 0x5eed)?;
        let e = nominal_test_error(model, &train, &test, prior, options)?;
        steps.push((s, e));
        Ok(e)
    };
    let mut s = 1.0;
    let mut below: Option<f64> = None;
    let mut above: Option<f64> = None;
    for _ in 0..40 {
        let e = eval(s)?;
        if e >= lo && e <= hi {
            return Ok(ScaleSearch {
                geometry_scale: s,
                nominal_error: e,
                steps,
            });
        }
        if e < lo {
            below = Some(s);
        } else {
            above = Some(s);
        }
        s = match (below, above) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            _ => s * (target / e.max(1e-9)).clamp(0.1, 10.0),
        };
    }
    Err(Error::OptimizationFailed {
        traces: steps.iter().map(|(s, e)| format!("scale {s}: {e} m")).collect(),
    })
}

/// Iteration-wise TCP behaviour of the equilibrium solver on random
/// configurations, for each compliance multiplier.
pub fn convergence_study(
    model: &RobotModel,
    theta: &CalibrationParams,
    compliance_scales: &[f64],
    n_configurations: usize,
    seed: u64,
    settings: &SolverSettings,
) -> Result<Vec<ConvergenceCurve>> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qs: Vec<Configuration> = (0..n_configurations).map(|_| sample_uniform(model, &mut rng)).collect();
    compliance_scales
        .iter()
        .map(|&scale| {
            let compliance = theta.compliance.scaled(scale);
            let runs: Vec<_> = qs
                .par_iter()
                .map(|q| solve_unchecked(model, q, &theta.rho0, &compliance, &theta.masses, settings, None))
                .collect();
            let mut curve = ConvergenceCurve {
                compliance_scale: scale,
                configurations: qs.len(),
                mean_delta: Vec::new(),
                mean_error_to_converged: Vec::new(),
                max_error_to_converged: Vec::new(),
                converged: 0,
                mean_iterations: 0.0,
            };
            let ok: Vec<_> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
            curve.converged = ok.len();
            if ok.is_empty() {
                return Ok(curve);
            }
            curve.mean_iterations = ok.iter().map(|r| r.iterations as f64).sum::<f64>() / ok.len() as f64;
            let len = ok.iter().map(|r| r.tcp_trace.len()).max().unwrap_or(0);
            let mut delta = vec![0.0; len.saturating_sub(1)];
            let mut err = vec![0.0; len];
            let mut err_max = vec![0.0f64; len];
            for r in &ok {
                for (k, d) in r.per_iteration_tcp_delta().into_iter().enumerate() {
                    delta[k] += d;
                }
                for (k, e) in r.tcp_error_to_converged().into_iter().enumerate() {
                    err[k] += e;
                    err_max[k] = err_max[k].max(e);
                }
            }
            let n = ok.len() as f64;
            curve.mean_delta = delta.into_iter().map(|v| v / n).collect();
            curve.mean_error_to_converged = err.into_iter().map(|v| v / n).collect();
            curve.max_error_to_converged = err_max;
            Ok(curve)
        })
        .collect()
}

/// Random arm motions among world spheres.
///
/// Each problem moves one arm (alternating right/left) from a feasible
/// configuration towards another; the rest of the body stays put. Even
/// problems pull the TCP to a target position with a free end, odd problems
/// pin the final configuration. Up to three obstacles sit near the TCP of the
/// joint-space straight line between start and goal, the rest are scattered in
/// front of the robot; none touches the start or the goal configuration.
pub fn planning_suite(model: &RobotModel, n: usize, n_obstacles: usize, seed: u64) -> Result<Vec<PlanningProblem>> {
    let qs = sample_feasible(model, 2 * n, seed, &SamplingOptions::default())?.configurations;
    let rho = model.nominal_rho();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let objective = PlannerObjective::default();
    let mut problems = Vec::with_capacity(n);
    for k in 0..n {
        let (tcp, other) = if k % 2 == 0 {
            (model.tcp.right, model.tcp.left)
        } else {
            (model.tcp.left, model.tcp.right)
        };
        let start = qs[2 * k].clone();
        let mut end = start.clone();
        for j in 0..model.n_joints() {
            let Some(link) = model.joint_link(j) else { continue };
            if model.is_ancestor(link, tcp) && !model.is_ancestor(link, other) {
                end[j] = qs[2 * k + 1][j];
            }
        }
        let f_start = forward_kinematics(model, &start, &rho)?;
        let f_end = forward_kinematics(model, &end, &rho)?;
        let clear = |c: &Vector3<f64>, r: f64, f: &crate::kinematics::FrameSet| {
            model.spheres.spheres.iter().all(|s| {
                let p = f.frames[s.link].transform_point(&s.center);
                (p - c).norm() > s.radius + r + objective.margin
            })
        };
        let mut obstacles = Vec::with_capacity(n_obstacles);
        let mut tries = 0;
        while obstacles.len() < n_obstacles {
            tries += 1;
            if tries > 100_000 {
                return Err(Error::Infeasible {
                    attempts: tries,
                    accepted: obstacles.len(),
                });
            }
            let radius = rng.gen_range(0.04..0.1);
            let center = if obstacles.len() < 3 {
                let t = rng.gen_range(0.3..0.7);
                let q = Configuration(start.iter().zip(end.iter()).map(|(a, b)| a + t * (b - a)).collect());
                let jitter = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                forward_kinematics(model, &q, &rho)?.origin(tcp) + 0.1 * jitter
            } else {
                Vector3::new(rng.gen_range(0.1..0.9), rng.gen_range(-0.8..0.8), rng.gen_range(0.3..1.3))
            };
            if clear(&center, radius, &f_start) && clear(&center, radius, &f_end) {
                obstacles.push(WorldSphere { center, radius });
            }
        }
        let goal = if k % 2 == 0 {
            Goal::Position {
                link: tcp,
                offset: Vector3::zeros(),
                target: f_end.origin(tcp),
            }
        } else {
            Goal::Configuration(end)
        };
        problems.push(PlanningProblem {
            name: format!("problem_{k:02}"),
            start,
            goal,
            objective: PlannerObjective {
                obstacles,
                ..objective.clone()
            },
        });
    }
    Ok(problems)
}
