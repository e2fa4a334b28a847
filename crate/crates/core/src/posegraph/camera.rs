use nalgebra::{Matrix2x3, Matrix3, SMatrix, Vector2, Vector3};

use super::{ExteriorOrientation, PoseError, SelfCalibration};
use crate::scalar::Real;

/// Pixel coordinates of world point `x`.
pub fn project_point<T: Real>(
    x: &Vector3<T>,
    eo: &ExteriorOrientation<T>,
    sc: &SelfCalibration<T>,
) -> Result<Vector2<T>, PoseError> {
    let p = eo.rotation_matrix() * (x - eo.center);
    if !(p.z > T::zero()) {
        return Err(PoseError::BehindCamera { camera: u32::MAX });
    }
    let (u, v) = (p.x / p.z, p.y / p.z);
    let r2 = u * u + v * v;
    let g = T::one() + sc.k1 * r2 + sc.k2 * r2 * r2;
    Ok(Vector2::new(sc.focal * u * g + sc.cx, sc.focal * v * g + sc.cy))
}

/// Projection and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionJacobians<T: Real> {
    pub xy: Vector2<T>,
    /// Columns: local rotation increment δ (3), then camera center (3).
    pub eo: SMatrix<T, 2, 6>,
    /// Columns: f, cx, cy, k1, k2.
    pub sc: SMatrix<T, 2, 5>,
    pub point: Matrix2x3<T>,
}

fn skew<T: Real>(a: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(T::zero(), -a.z, a.y, a.z, T::zero(), -a.x, -a.y, a.x, T::zero())
}

pub fn project_with_jacobians<T: Real>(
    x: &Vector3<T>,
    eo: &ExteriorOrientation<T>,
    sc: &SelfCalibration<T>,
) -> Result<ProjectionJacobians<T>, PoseError> {
    let r = eo.rotation_matrix();
    let d = x - eo.center;
    let p = r * d;
    if !(p.z > T::zero()) {
        return Err(PoseError::BehindCamera { camera: u32::MAX });
    }
    let iz = T::one() / p.z;
    let (u, v) = (p.x * iz, p.y * iz);
    let r2 = u * u + v * v;
    let r4 = r2 * r2;
    let g = T::one() + sc.k1 * r2 + sc.k2 * r4;
    let f = sc.focal;
    let two = T::lit(2.0);
    let dg = (sc.k1 + two * sc.k2 * r2) * two;

    let d_uv = Matrix2x3::new(iz, T::zero(), -u * iz, T::zero(), iz, -v * iz);
    let d_pix = nalgebra::Matrix2::new(
        f * (g + u * u * dg),
        f * u * v * dg,
        f * u * v * dg,
        f * (g + v * v * dg),
    );
    let d_p = d_pix * d_uv;

    let mut j_eo = SMatrix::<T, 2, 6>::zeros();
    j_eo.fixed_view_mut::<2, 3>(0, 0).copy_from(&(d_p * (-r * skew(&d))));
    j_eo.fixed_view_mut::<2, 3>(0, 3).copy_from(&(d_p * (-r)));
    let j_sc = SMatrix::<T, 2, 5>::new(
        u * g, T::one(), T::zero(), f * u * r2, f * u * r4,
        v * g, T::zero(), T::one(), f * v * r2, f * v * r4,
    );
    Ok(ProjectionJacobians {
        xy: Vector2::new(f * u * g + sc.cx, f * v * g + sc.cy),
        eo: j_eo,
        sc: j_sc,
        point: d_p * r,
    })
}

/// Inverse right Jacobian of SO(3) at φ.
pub(crate) fn right_jacobian_inv<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let theta = phi.norm();
    let k = skew(phi);
    let half = T::lit(0.5);
    if theta < T::lit(1e-6) {
        return Matrix3::identity() + k * half + k * k * T::lit(1.0 / 12.0);
    }
    let c = T::one() / (theta * theta) - (T::one() + theta.cos()) / (T::lit(2.0) * theta * theta.sin());
    Matrix3::identity() + k * half + k * k * c
}
