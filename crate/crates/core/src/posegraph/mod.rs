//! Progressive bundle adjustment: a new epoch's cameras, self-calibration and
//! tie points are refined against a reference epoch whose parameters stay fixed.

mod camera;
mod solver;

pub use camera::{project_point, project_with_jacobians, ProjectionJacobians};
pub use solver::{
    compute_residuals, refine_progressive, AdjustmentResult, FixedMode, IterationLog, RefineOptions, Residuals,
};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseError {
    #[error("point lies at or behind the image plane of camera {camera}")]
    BehindCamera { camera: u32 },
    #[error("observation {observation} references unknown {what} {id}")]
    Dangling { observation: usize, what: &'static str, id: u32 },
    #[error("camera {camera} references unknown calibration {calibration}")]
    UnknownCalibration { camera: u32, calibration: u32 },
    #[error("duplicate {what} id {id}")]
    Duplicate { what: &'static str, id: u32 },
    #[error("track {track} is observed {count} time(s); at least 2 required")]
    UnderObserved { track: u32, count: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("reduced normal equations are rank deficient")]
    RankDeficient,
}

/// Camera pose: center C and world-to-camera rotation R as an axis-angle
/// vector, so a world point X maps to R (X − C) in the camera frame (+z forward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExteriorOrientation<T: Real> {
    pub center: Vector3<T>,
    pub rotation: Vector3<T>,
}

impl<T: Real> ExteriorOrientation<T> {
    pub fn new(center: Vector3<T>, rotation: Vector3<T>) -> Self {
        ExteriorOrientation { center, rotation }
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        Rotation3::new(self.rotation).into_inner()
    }

    /// Orientation whose optical axis points from `center` toward `target`.
    pub fn look_at(center: Vector3<T>, target: Vector3<T>, up: Vector3<T>) -> Self {
        let z = (target - center).normalize();
        let mut x = z.cross(&up);
        if x.norm() < T::lit(1e-9) {
            x = z.cross(&Vector3::x());
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rotation = rotation_log(&UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)));
        ExteriorOrientation { center, rotation }
    }

    /// Applies a local increment: R ← R·exp([δ]×).
    pub fn rotated(&self, delta: &Vector3<T>) -> Self {
        let q = UnitQuaternion::from_scaled_axis(self.rotation) * UnitQuaternion::from_scaled_axis(*delta);
        ExteriorOrientation { center: self.center, rotation: rotation_log(&q) }
    }
}

/// Axis-angle vector of `q` with angle in [0, π], accurate near 0 and π.
pub fn rotation_log<T: Real>(q: &UnitQuaternion<T>) -> Vector3<T> {
    let (w, v) = (q.w, q.imag());
    let (w, v) = if w < T::zero() { (-w, -v) } else { (w, v) };
    let n = v.norm();
    if n == T::zero() {
        return Vector3::zeros();
    }
    v * (T::lit(2.0) * n.atan2(w) / n)
}

/// Interior model: f, principal point and two radial terms on normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SelfCalibration<T: Real> {
    pub focal: T,
    pub cx: T,
    pub cy: T,
    pub k1: T,
    pub k2: T,
}

impl<T: Real> SelfCalibration<T> {
    pub fn pinhole(focal: T, cx: T, cy: T) -> Self {
        SelfCalibration { focal, cx, cy, k1: T::zero(), k2: T::zero() }
    }

    pub(crate) fn to_array(self) -> [T; 5] {
        [self.focal, self.cx, self.cy, self.k1, self.k2]
    }

    pub(crate) fn from_array(a: [T; 5]) -> Self {
        SelfCalibration { focal: a[0], cx: a[1], cy: a[2], k1: a[3], k2: a[4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Camera<T: Real> {
    pub id: u32,
    pub epoch: u32,
    pub calibration: u32,
    pub eo: ExteriorOrientation<T>,
    /// Reference-epoch camera: never changed by the adjustment.
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Calibration<T: Real> {
    pub id: u32,
    pub intrinsics: SelfCalibration<T>,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ObjectPoint<T: Real> {
    pub track: u32,
    pub position: Vector3<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ImageObservation<T: Real> {
    pub camera: u32,
    pub track: u32,
    /// Measured image coordinates in pixels.
    pub xy: [T; 2],
    #[serde(default = "unit_weight")]
    pub weight: T,
}

fn unit_weight<T: Real>() -> T {
    T::one()
}

/// Everything the adjustment consumes; also the scenario file's schema.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Network<T: Real> {
    pub cameras: Vec<Camera<T>>,
    pub calibrations: Vec<Calibration<T>>,
    pub points: Vec<ObjectPoint<T>>,
    pub observations: Vec<ImageObservation<T>>,
}
