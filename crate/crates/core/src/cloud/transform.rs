use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{CloudError, Point3};
use crate::scalar::Real;

/// Proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RigidTransform<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates orthonormality (1e-9 elementwise) and a determinant of +1.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, CloudError> {
        let tol = T::lit(1e-9).max(T::machine_epsilon() * T::lit(64.0));
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.iter().any(|e| e.abs() > tol) {
            return Err(CloudError::InvalidTransform("rotation is not orthonormal".into()));
        }
        if (rotation.determinant() - T::one()).abs() > tol {
            return Err(CloudError::InvalidTransform("rotation determinant is not +1".into()));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(CloudError::InvalidTransform("non-finite translation".into()));
        }
        Ok(RigidTransform { rotation, translation })
    }

    pub fn from_rotation(rotation: Rotation3<T>, translation: Vector3<T>) -> Self {
        RigidTransform {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis`, then translation.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T, translation: Vector3<T>) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self::from_rotation(rot, translation)
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Angle of the rotation part in radians.
    pub fn rotation_angle(&self) -> T {
        let c = ((self.rotation.trace() - T::one()) * T::lit(0.5)).clamp(-T::one(), T::one());
        // acos loses accuracy near zero; use the skew part there
        let s = Vector3::new(
            self.rotation[(2, 1)] - self.rotation[(1, 2)],
            self.rotation[(0, 2)] - self.rotation[(2, 0)],
            self.rotation[(1, 0)] - self.rotation[(0, 1)],
        )
        .norm()
            * T::lit(0.5);
        s.atan2(c)
    }
}
