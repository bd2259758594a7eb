use nalgebra::Vector3;

use crate::kinematics::FrameSet;
use crate::model::RobotModel;
use crate::transform::Transform;

/// Distance from `center` to the closest point of the segment `origin→target`.
pub fn segment_sphere_distance(origin: &Vector3<f64>, target: &Vector3<f64>, center: &Vector3<f64>) -> f64 {
    let dir = target - origin;
    let len2 = dir.norm_squared();
    let t = if len2 > 0.0 {
        ((center - origin).dot(&dir) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (origin + dir * t - center).norm()
}

/// True iff the segment (not the infinite line) passes within `radius` of `center`.
pub fn ray_sphere_blocked(origin: &Vector3<f64>, target: &Vector3<f64>, center: &Vector3<f64>, radius: f64) -> bool {
    segment_sphere_distance(origin, target, center) < radius
}

/// World-frame sphere centers and radii for the given frames.
pub(crate) fn world_spheres(model: &RobotModel, frames: &FrameSet, world: &Transform) -> Vec<(usize, Vector3<f64>, f64)> {
    model
        .spheres
        .spheres
        .iter()
        .map(|s| {
            let c = world.transform_point(&frames.frames[s.link].transform_point(&s.center));
            (s.link, c, s.radius)
        })
        .collect()
}

/// True if two spheres on links that are neither identical nor parent/child overlap.
pub fn self_collision(model: &RobotModel, frames: &FrameSet) -> bool {
    let spheres = world_spheres(model, frames, &Transform::identity());
    let adjacent = |a: usize, b: usize| {
        a == b || model.links[a].parent == Some(b) || model.links[b].parent == Some(a)
    };
    for (i, (la, ca, ra)) in spheres.iter().enumerate() {
        for (lb, cb, rb) in &spheres[i + 1..] {
            if !adjacent(*la, *lb) && (ca - cb).norm() < ra + rb {
                return true;
            }
        }
    }
    false
}

/// Number of cameras with a clear line of sight to each marker.
///
/// `markers` are (link, world position) pairs; spheres on the marker's own
/// link are ignored since the marker sits on that link's surface.
pub fn marker_visibility(
    cameras: &[Vector3<f64>],
    markers: &[(usize, Vector3<f64>)],
    spheres: &[(usize, Vector3<f64>, f64)],
) -> Vec<usize> {
    markers
        .iter()
        .map(|(link, m)| {
            cameras
                .iter()
                .filter(|cam| {
                    !spheres
                        .iter()
                        .any(|(sl, c, r)| sl != link && ray_sphere_blocked(cam, m, c, *r))
                })
                .count()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_sphere_blocks() {
        let o = Vector3::new(0.0, 0.0, 0.0);
        let t = Vector3::new(2.0, 0.0, 0.0);
        assert!(ray_sphere_blocked(&o, &t, &Vector3::new(1.0, 0.0, 0.0), 0.01));
        assert!(ray_sphere_blocked(&o, &t, &Vector3::new(1.0, 0.05, 0.0), 0.1));
    }

    #[test]
    fn sphere_behind_origin_does_not_block() {
        let o = Vector3::new(0.0, 0.0, 0.0);
        let t = Vector3::new(2.0, 0.0, 0.0);
        // On the infinite line, but behind the origin.
        assert!(!ray_sphere_blocked(&o, &t, &Vector3::new(-0.5, 0.0, 0.0), 0.4));
        // And beyond the target.
        assert!(!ray_sphere_blocked(&o, &t, &Vector3::new(2.5, 0.0, 0.0), 0.4));
    }

    #[test]
    fn own_link_spheres_do_not_occlude() {
        let cams = [Vector3::new(0.0, 0.0, 3.0)];
        let marker = [(2usize, Vector3::new(0.0, 0.0, 0.0))];
        let on_marker = [(2usize, Vector3::new(0.0, 0.0, 0.05), 0.1)];
        assert_eq!(marker_visibility(&cams, &marker, &on_marker), vec![1]);
        let other = [(1usize, Vector3::new(0.0, 0.0, 1.0), 0.1)];
        assert_eq!(marker_visibility(&cams, &marker, &other), vec![0]);
    }
}
