use serde::{Deserialize, Serialize};

use super::ChangeError;
use crate::cloud::{BoundingCube, Point3, PointCloud};
use crate::scalar::Real;

/// Point densities (points/m³) of the m³ sub-voxels of a cell, indexed
/// x-major: `i = (ix·m + iy)·m + iz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DensityFeature<T: Real> {
    pub subdivisions: usize,
    pub densities: Vec<T>,
}

impl<T: Real> DensityFeature<T> {
    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }
}

/// Sub-voxel slot of `p` within `bounds`, or `None` if outside. Intervals are
/// half-open except on the cell's max faces, so a point on a shared face goes
/// to the sub-voxel with the larger index.
#[inline]
pub(crate) fn subvoxel_index<T: Real>(p: &Point3<T>, bounds: &BoundingCube<T>, m: usize) -> Option<usize> {
    let max = bounds.max();
    let mf = T::from_count(m);
    let mut ijk = [0usize; 3];
    for a in 0..3 {
        if p[a] < bounds.min[a] || p[a] > max[a] {
            return None;
        }
        let f = ((p[a] - bounds.min[a]) / bounds.edge * mf).floor().as_f64();
        ijk[a] = (f.max(0.0) as usize).min(m - 1);
    }
    Some((ijk[0] * m + ijk[1]) * m + ijk[2])
}

/// Same slot computation for a point already known to be inside the cell.
#[inline]
pub(crate) fn subvoxel_index_clamped<T: Real>(p: &Point3<T>, bounds: &BoundingCube<T>, m: usize) -> usize {
    let mf = T::from_count(m);
    let mut ijk = [0usize; 3];
    for a in 0..3 {
        let f = ((p[a] - bounds.min[a]) / bounds.edge * mf).floor().as_f64();
        ijk[a] = (f.max(0.0) as usize).min(m - 1);
    }
    (ijk[0] * m + ijk[1]) * m + ijk[2]
}

/// Densities of `cloud` over the m³ sub-voxels of `bounds`.
pub fn density_feature<T: Real>(
    bounds: &BoundingCube<T>,
    cloud: &PointCloud<T>,
    m: usize,
) -> Result<DensityFeature<T>, ChangeError> {
    if !(bounds.edge > T::zero()) {
        return Err(ChangeError::DegenerateBounds);
    }
    if m < 1 {
        return Err(ChangeError::InvalidParams("subdivisions must be at least 1".into()));
    }
    let mut counts = vec![0u32; m * m * m];
    for p in cloud.iter() {
        if let Some(i) = subvoxel_index(p, bounds, m) {
            counts[i] += 1;
        }
    }
    let inv = T::one() / subvoxel_volume(bounds.edge, m);
    Ok(DensityFeature {
        subdivisions: m,
        densities: counts.iter().map(|&c| T::from_count(c as usize) * inv).collect(),
    })
}

pub(crate) fn subvoxel_volume<T: Real>(edge: T, m: usize) -> T {
    let s = edge / T::from_count(m);
    s * s * s
}

/// Σ (d₂ − d₁)², divided by N when `normalize` is set.
pub fn feature_distance<T: Real>(
    f1: &DensityFeature<T>,
    f2: &DensityFeature<T>,
    normalize: bool,
) -> Result<T, ChangeError> {
    if f1.len() != f2.len() || f1.subdivisions != f2.subdivisions {
        return Err(ChangeError::MismatchedFeatures(f1.len(), f2.len()));
    }
    let sum = f1
        .densities
        .iter()
        .zip(&f2.densities)
        .fold(T::zero(), |s, (&a, &b)| s + (b - a) * (b - a));
    Ok(if normalize && !f1.is_empty() {
        sum / T::from_count(f1.len())
    } else {
        sum
    })
}

/// Score from raw sub-voxel counts; agrees with
/// `feature_distance(density_feature(..), density_feature(..))`.
pub(crate) fn count_distance<T: Real>(c1: &[u32], c2: &[u32], sub_volume: T, normalize: bool) -> T {
    let inv = T::one() / sub_volume;
    let sum = c1.iter().zip(c2).fold(T::zero(), |s, (&a, &b)| {
        let d = T::from_count(a.abs_diff(b) as usize) * inv;
        s + d * d
    });
    if normalize {
        sum / T::from_count(c1.len())
    } else {
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> BoundingCube<f64> {
        BoundingCube::new(Point3::origin(), 1.0)
    }

    #[test]
    fn empty_bounds_give_zero_vector() {
        let c = PointCloud::new(vec![Point3::new(5.0, 5.0, 5.0)]).unwrap();
        let f = density_feature(&unit(), &c, 2).unwrap();
        assert_eq!(f.densities, vec![0.0; 8]);
    }

    #[test]
    fn one_point_per_octant() {
        let pts = (0..8)
            .map(|o| {
                Point3::new(
                    0.25 + 0.5 * (o & 1) as f64,
                    0.25 + 0.5 * ((o >> 1) & 1) as f64,
                    0.25 + 0.5 * ((o >> 2) & 1) as f64,
                )
            })
            .collect();
        let f = density_feature(&unit(), &PointCloud::new(pts).unwrap(), 2).unwrap();
        assert_eq!(f.densities, vec![8.0; 8]);
    }

    #[test]
    fn shared_face_goes_to_larger_index() {
        let c = PointCloud::new(vec![Point3::new(0.5, 0.2, 0.2), Point3::new(1.0, 1.0, 1.0)]).unwrap();
        let f = density_feature(&unit(), &c, 2).unwrap();
        // (0.5, 0.2, 0.2) → ix = 1 → slot 4; the max corner stays inside → slot 7
        assert_eq!(f.densities[4], 8.0);
        assert_eq!(f.densities[7], 8.0);
        assert_eq!(f.densities.iter().filter(|&&d| d > 0.0).count(), 2);
    }

    #[test]
    fn degenerate_bounds() {
        let c = PointCloud::<f64>::empty();
        let b = BoundingCube::new(Point3::origin(), 0.0);
        assert_eq!(density_feature(&b, &c, 2), Err(ChangeError::DegenerateBounds));
    }

    #[test]
    fn distance_algebra() {
        let a = DensityFeature {
            subdivisions: 2,
            densities: vec![1.0; 8],
        };
        let mut b = a.clone();
        assert_eq!(feature_distance(&a, &b, true).unwrap(), 0.0);
        b.densities[3] += 4.0;
        assert_eq!(feature_distance(&a, &b, true).unwrap(), 2.0);
        assert_eq!(feature_distance(&a, &b, false).unwrap(), 16.0);
        let c = DensityFeature {
            subdivisions: 1,
            densities: vec![0.0],
        };
        assert!(matches!(feature_distance(&a, &c, true), Err(ChangeError::MismatchedFeatures(8, 1))));
    }

    #[test]
    fn counts_match_features() {
        let c1 = [3u32, 0, 1, 2, 0, 0, 5, 1];
        let c2 = [1u32, 0, 4, 2, 1, 0, 0, 1];
        let v = 0.125f64;
        let f = |c: &[u32]| DensityFeature {
            subdivisions: 2,
            densities: c.iter().map(|&x| x as f64 / v).collect(),
        };
        let d1 = count_distance(&c1, &c2, v, true);
        let d2 = feature_distance(&f(&c1), &f(&c2), true).unwrap();
        assert!((d1 - d2).abs() <= 1e-12 * d2);
    }
}
