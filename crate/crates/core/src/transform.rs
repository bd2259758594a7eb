//! Rigid transforms stored as a rotation matrix plus translation.

use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

/// A rigid-body transform `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation given as a scaled axis (axis-angle vector), then translation.
    pub fn from_axis_angle(position: Vector3<f64>, axis_angle: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation: position,
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            Vector3::zeros(),
        )
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            Vector3::zeros(),
        )
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            Vector3::zeros(),
        )
    }

    pub fn trans_x(dist: f64) -> Self {
        Self::from_translation(Vector3::new(dist, 0.0, 0.0))
    }

    pub fn trans_z(dist: f64) -> Self {
        Self::from_translation(Vector3::new(0.0, 0.0, dist))
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `‖RᵀR − I‖` (Frobenius) and `|det R − 1|`.
    pub fn orthonormality_error(&self) -> (f64, f64) {
        let r = &self.rotation;
        let gram = (r.transpose() * r - Matrix3::identity()).norm();
        (gram, (r.determinant() - 1.0).abs())
    }
}

impl Mul<&Transform> for &Transform {
    type Output = Transform;

    #[inline]
    fn mul(self, rhs: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl Mul for Transform {
    type Output = Transform;

    #[inline]
    fn mul(self, rhs: Transform) -> Transform {
        &self * &rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn inverse_composes_to_identity() {
        let t = Transform::from_axis_angle(Vector3::new(0.1, -0.4, 2.0), Vector3::new(0.3, -0.2, 0.9));
        let id = &t * &t.inverse();
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-14);
        assert!(id.translation.norm() < 1e-14);
    }

    #[test]
    fn elementary_rotations_are_right_handed() {
        let p = Transform::rot_z(FRAC_PI_2).transform_point(&Vector3::x());
        assert!((p - Vector3::y()).norm() < 1e-15);
        let p = Transform::rot_x(FRAC_PI_2).transform_point(&Vector3::y());
        assert!((p - Vector3::z()).norm() < 1e-15);
        let p = Transform::rot_y(FRAC_PI_2).transform_point(&Vector3::z());
        assert!((p - Vector3::x()).norm() < 1e-15);
    }
}
