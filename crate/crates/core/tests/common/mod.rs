#![allow(dead_code)]

use nalgebra::{Isometry3, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use elastokin::calibration::ClosureFrames;
use elastokin::elastic::{ComplianceSet, PointMass};
use elastokin::model::{JointLimit, TcpLinks};
use elastokin::selection::{sample_uniform, CameraRig, SphereModel};
use elastokin::{Configuration, DhLink, DhParamSet, DhParams, FrameSet, JointBinding, RobotModel, Transform};

/// Serial or tree model from `(params, binding, parent)` triples; every bound
/// link gets the next joint index.
pub fn tree_model(links: &[(DhParams, JointBinding, Option<usize>)], masses: Vec<PointMass>, gravity: Vector3<f64>) -> RobotModel {
    let mut j = 0;
    let links: Vec<DhLink> = links
        .iter()
        .enumerate()
        .map(|(i, (p, b, parent))| {
            let joint_index = (*b != JointBinding::None).then(|| {
                j += 1;
                j - 1
            });
            DhLink {
                name: format!("l{i}"),
                params: *p,
                binding: *b,
                joint_index,
                parent: *parent,
            }
        })
        .collect();
    let n = links.len();
    RobotModel {
        name: "test".into(),
        links,
        masses,
        compliance: ComplianceSet::zeros(n),
        gravity,
        tcp: TcpLinks { right: n - 1, left: n - 1 },
        closure: ClosureFrames::default(),
        spheres: SphereModel::default(),
        cameras: CameraRig::default(),
        joint_limits: vec![JointLimit::new(-3.0, 3.0); j],
        velocity_limits: vec![1.0; j],
    }
}

pub fn chain(params: &[DhParams]) -> RobotModel {
    let links: Vec<_> = params
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, JointBinding::Revolute, i.checked_sub(1)))
        .collect();
    tree_model(&links, Vec::new(), Vector3::new(0.0, 0.0, -9.81))
}

/// One revolute link about the base z axis with a point mass at `(l, 0, 0)`;
/// gravity acts along −y so the joint axis is horizontal.
pub fn pendulum(l: f64, m: f64, c_theta: f64, theta0: f64, g: f64) -> RobotModel {
    let mut model = tree_model(
        &[(DhParams::new(0.0, 0.0, 0.0, 0.0, theta0), JointBinding::Revolute, None)],
        vec![PointMass {
            link: 0,
            mass: m,
            position: Vector3::new(l, 0.0, 0.0),
        }],
        Vector3::new(0.0, -g, 0.0),
    );
    model.compliance[0].theta = c_theta;
    model
}

/// Root of `θ − θ0 + c·m·g·l·cos(θ + q)` by bisection.
pub fn pendulum_oracle(l: f64, m: f64, c: f64, theta0: f64, g: f64, q: f64) -> f64 {
    let k = c * m * g * l;
    let f = |t: f64| t - theta0 + k * (t + q).cos();
    let (mut lo, mut hi) = (theta0 - k - 1e-3, theta0 + k + 1e-3);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn random_configurations(model: &RobotModel, n: usize, seed: u64) -> Vec<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_uniform(model, &mut rng)).collect()
}

/// Link transform as a product of five elementary isometries.
pub fn factor_product(p: &DhParams, binding: JointBinding, q: f64) -> Isometry3<f64> {
    let (theta, d) = match binding {
        JointBinding::Revolute => (p.theta + q, p.d),
        JointBinding::Prismatic => (p.theta, p.d + q),
        JointBinding::None => (p.theta, p.d),
    };
    Isometry3::rotation(Vector3::y() * p.beta)
        * Isometry3::rotation(Vector3::x() * p.alpha)
        * Isometry3::translation(p.r, 0.0, 0.0)
        * Isometry3::rotation(Vector3::z() * theta)
        * Isometry3::translation(0.0, 0.0, d)
}

/// World frame of `link` by walking up to the base and multiplying factors.
pub fn oracle_frame(model: &RobotModel, q: &[f64], rho: &DhParamSet, link: usize) -> Isometry3<f64> {
    let mut chain = Vec::new();
    let mut cur = Some(link);
    while let Some(c) = cur {
        chain.push(c);
        cur = model.links[c].parent;
    }
    chain.iter().rev().fold(Isometry3::identity(), |acc, &k| {
        let l = &model.links[k];
        let qv = l.joint_index.map_or(0.0, |j| q[j]);
        acc * factor_product(&rho[k], l.binding, qv)
    })
}

pub fn frame_distance(t: &Transform, o: &Isometry3<f64>) -> f64 {
    let rot: Matrix3<f64> = o.rotation.to_rotation_matrix().into_inner();
    (t.rotation - rot).amax().max((t.translation - o.translation.vector).amax())
}

/// Per-link gravity torques by a double loop over links and masses.
pub fn brute_force_torques(model: &RobotModel, frames: &FrameSet, masses: &[PointMass], g: &Vector3<f64>) -> Vec<Vector3<f64>> {
    (0..model.n_links())
        .map(|i| {
            let parent = frames.parent_frame(model.links[i].parent);
            let own = &frames.frames[i];
            let mut t = Vector3::zeros();
            for m in masses {
                if !model.is_ancestor(i, m.link) {
                    continue;
                }
                let w = frames.frames[m.link].transform_point(&m.position);
                let f = m.mass * g;
                let about_parent = (w - parent.translation).cross(&f);
                let about_own = (w - own.translation).cross(&f);
                t.x += about_parent.dot(&parent.rotation.column(0));
                t.y += about_parent.dot(&parent.rotation.column(1));
                t.z += about_own.dot(&own.rotation.column(2));
            }
            t
        })
        .collect()
}
