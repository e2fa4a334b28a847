use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RegistrationError;
use crate::cloud::{BoundingCube, Point3, PointCloud};
use crate::index::KdTree;
use crate::scalar::Real;

/// Per-point distances with their summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DistanceReport<T: Real> {
    pub distances: Vec<T>,
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
    /// Probe indices whose local plane was degenerate; their distance is the
    /// plain nearest-neighbor distance.
    pub fallback: Vec<usize>,
}

impl<T: Real> DistanceReport<T> {
    pub fn from_distances(distances: Vec<T>, fallback: Vec<usize>) -> Self {
        let (mean, std) = mean_std(&distances);
        DistanceReport {
            distances,
            mean,
            std,
            fallback,
        }
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    /// True when `mean` and `std` agree with the stored distances to 1e-12 relative.
    pub fn is_consistent(&self) -> bool {
        let (m, s) = mean_std(&self.distances);
        let close = |a: T, b: T| (a - b).abs() <= T::lit(1e-12) * a.abs().max(b.abs()).max(T::lit(1e-300));
        close(m, self.mean) && close(s, self.std)
    }

    /// Counts over `bins` equal-width bins spanning `[0, max]`; larger values
    /// land in the last bin.
    pub fn histogram(&self, bins: usize, max: T) -> Vec<usize> {
        let mut h = vec![0; bins.max(1)];
        let last = h.len() - 1;
        for &d in &self.distances {
            let b = (d / max * T::from_count(h.len())).floor().as_f64();
            h[if b.is_nan() || b < 0.0 { 0 } else { (b as usize).min(last) }] += 1;
        }
        h
    }
}

fn mean_std<T: Real>(v: &[T]) -> (T, T) {
    if v.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::from_count(v.len());
    let mean = v.iter().fold(T::zero(), |s, &d| s + d) / n;
    let var = v.iter().fold(T::zero(), |s, &d| s + (d - mean) * (d - mean)) / n;
    (mean, var.sqrt())
}

/// Distance from `p` to the least-squares plane through `nbrs`, or `None` if
/// the neighborhood is collinear (no unique plane).
pub(crate) fn plane_distance<T: Real>(p: &Point3<T>, nbrs: &[Point3<T>]) -> Option<T> {
    let n = T::from_count(nbrs.len());
    let c = nbrs.iter().fold(Vector3::zeros(), |s, q| s + q.coords) / n;
    let mut cov = Matrix3::zeros();
    for q in nbrs {
        let d = q.coords - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let [lo, mid, hi] = order;
    if !(eig.eigenvalues[mid] > eig.eigenvalues[hi] * T::lit(1e-12)) {
        return None;
    }
    let normal = eig.eigenvectors.column(lo).into_owned();
    Some((normal.dot(&(p.coords - c))).abs())
}

/// For every probe point: distance to the plane fitted through its `k` nearest
/// reference points.
pub fn point_to_plane_distances<T: Real>(
    probe: &PointCloud<T>,
    reference: &PointCloud<T>,
    k: usize,
) -> Result<DistanceReport<T>, RegistrationError> {
    if k < 3 || reference.len() < k {
        return Err(RegistrationError::TooFewReferencePoints {
            len: reference.len(),
            k,
        });
    }
    let tree = KdTree::build(reference.points())?;
    let refs = reference.points();
    let per_point: Vec<(T, bool)> = probe
        .points()
        .par_iter()
        .map(|p| {
            let nn = tree.knn(p, k).expect("k checked against reference size");
            let nbrs: Vec<Point3<T>> = nn.iter().map(|n| refs[n.index]).collect();
            match plane_distance(p, &nbrs) {
                Some(d) => (d, false),
                None => (nn[0].distance(), true),
            }
        })
        .collect();
    let fallback = per_point
        .iter()
        .enumerate()
        .filter_map(|(i, &(_, f))| f.then_some(i))
        .collect();
    Ok(DistanceReport::from_distances(
        per_point.into_iter().map(|(d, _)| d).collect(),
        fallback,
    ))
}

/// Point-to-plane report for the parts of both clouds inside `region`, with
/// `cloud_a` as the probe.
pub fn summarize_unchanged_region<T: Real>(
    cloud_a: &PointCloud<T>,
    cloud_b: &PointCloud<T>,
    region: &BoundingCube<T>,
    k: usize,
) -> Result<DistanceReport<T>, RegistrationError> {
    let inside = |c: &PointCloud<T>| -> Vec<usize> {
        c.iter()
            .enumerate()
            .filter_map(|(i, p)| region.contains(p).then_some(i))
            .collect()
    };
    let ia = inside(cloud_a);
    if ia.is_empty() {
        return Err(RegistrationError::EmptyRegion("cloud_a"));
    }
    let ib = inside(cloud_b);
    if ib.is_empty() {
        return Err(RegistrationError::EmptyRegion("cloud_b"));
    }
    point_to_plane_distances(&cloud_a.select(&ia), &cloud_b.select(&ib), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(z: f64, n: usize, step: f64) -> PointCloud<f64> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Point3::new(i as f64 * step, j as f64 * step, z));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn point_on_plane() {
        let r = plane(0.0, 20, 0.1);
        let probe = PointCloud::new(vec![Point3::new(1.03, 0.57, 0.0)]).unwrap();
        let d = point_to_plane_distances(&probe, &r, 8).unwrap();
        assert!(d.distances[0].abs() < 1e-9);
        assert!(d.fallback.is_empty());
    }

    #[test]
    fn parallel_offset() {
        let r = plane(0.0, 20, 0.1);
        let probe = plane(0.1, 10, 0.17);
        let d = point_to_plane_distances(&probe, &r, 8).unwrap();
        assert!((d.mean - 0.1).abs() < 1e-9);
        assert!(d.std < 1e-9);
        assert!(d.is_consistent());
    }

    #[test]
    fn collinear_neighbors_fall_back() {
        let line = PointCloud::new((0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let probe = PointCloud::new(vec![Point3::new(2.0, 3.0, 4.0)]).unwrap();
        let d = point_to_plane_distances(&probe, &line, 4).unwrap();
        assert_eq!(d.fallback, vec![0]);
        assert!((d.distances[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn k_validation() {
        let r = plane(0.0, 2, 1.0);
        assert!(point_to_plane_distances(&r, &r, 2).is_err());
        assert!(point_to_plane_distances(&r, &r, 5).is_err());
    }

    #[test]
    fn region_summary() {
        let a = plane(0.0, 30, 0.1);
        let b = a.map_points(|p| Point3::new(p.x, p.y, p.z + 0.03));
        let region = BoundingCube::new(Point3::new(0.5, 0.5, -1.0), 2.0);
        let same = summarize_unchanged_region(&a, &a, &region, 8).unwrap();
        assert!(same.mean.abs() < 1e-12);
        let shifted = summarize_unchanged_region(&a, &b, &region, 8).unwrap();
        assert!((shifted.mean - 0.03).abs() < 1e-9);
        let far = BoundingCube::new(Point3::new(50.0, 50.0, 50.0), 1.0);
        assert!(matches!(
            summarize_unchanged_region(&a, &b, &far, 8),
            Err(RegistrationError::EmptyRegion(_))
        ));
    }

    #[test]
    fn histogram_bins() {
        let r = DistanceReport::from_distances(vec![0.0, 0.06, 0.17, 0.5, 3.0], vec![]);
        assert_eq!(r.histogram(4, 0.2), vec![1, 1, 0, 3]);
    }
}
