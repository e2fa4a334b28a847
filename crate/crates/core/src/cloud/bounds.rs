use serde::{Deserialize, Serialize};

use super::{CloudError, Point3, PointCloud};
use crate::scalar::Real;

/// Axis-aligned cube given by its minimum corner and edge length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundingCube<T: Real> {
    pub min: Point3<T>,
    pub edge: T,
}

impl<T: Real> BoundingCube<T> {
    pub fn new(min: Point3<T>, edge: T) -> Self {
        BoundingCube { min, edge }
    }

    pub fn max(&self) -> Point3<T> {
        Point3::new(self.min.x + self.edge, self.min.y + self.edge, self.min.z + self.edge)
    }

    pub fn center(&self) -> Point3<T> {
        let h = self.edge * T::lit(0.5);
        Point3::new(self.min.x + h, self.min.y + h, self.min.z + h)
    }

    pub fn volume(&self) -> T {
        self.edge * self.edge * self.edge
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Point3<T>) -> bool {
        let max = self.max();
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= max[a])
    }

    /// The `octant`-th child cube; bit 0 selects +x, bit 1 +y, bit 2 +z.
    pub fn octant(&self, octant: usize) -> Self {
        let h = self.edge * T::lit(0.5);
        let off = |bit: usize| if octant & bit != 0 { h } else { T::zero() };
        BoundingCube {
            min: Point3::new(self.min.x + off(1), self.min.y + off(2), self.min.z + off(4)),
            edge: h,
        }
    }
}

/// Smallest axis-aligned cube (edge = largest extent + 2·padding) centered on the
/// cloud's bounding box. A zero-extent cloud with zero padding gets a unit cube.
pub fn bounding_cube<T: Real>(cloud: &PointCloud<T>, padding: T) -> Result<BoundingCube<T>, CloudError> {
    let first = cloud.points().first().ok_or(CloudError::Empty)?;
    let (mut lo, mut hi) = (*first, *first);
    for p in cloud.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(T::zero(), |m, e| m.max(e));
    let mut edge = extent + padding * T::lit(2.0);
    if edge <= T::zero() {
        edge = T::one();
    }
    let half = T::lit(0.5);
    let mut min = Point3::new(
        (lo.x + hi.x) * half - edge * half,
        (lo.y + hi.y) * half - edge * half,
        (lo.z + hi.z) * half - edge * half,
    );
    // rounding in the centering step can leave the extreme points a few ulps outside
    loop {
        let mut grown = false;
        for a in 0..3 {
            if min[a] > lo[a] {
                min[a] = lo[a];
                grown = true;
            }
            if min[a] + edge < hi[a] {
                edge += (hi[a] - (min[a] + edge)).max(edge * T::machine_epsilon());
                grown = true;
            }
        }
        if !grown {
            break;
        }
    }
    Ok(BoundingCube { min, edge })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_padding() {
        let c = PointCloud::new(vec![Point3::new(2.0f64, 3.0, 4.0)]).unwrap();
        let b = bounding_cube(&c, 0.5).unwrap();
        assert_eq!(b.edge, 1.0);
        assert_eq!(b.center(), Point3::new(2.0, 3.0, 4.0));
    }

    #[test]
    fn unit_cube_corners() {
        let pts = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let b = bounding_cube(&PointCloud::new(pts).unwrap(), 0.0).unwrap();
        assert_eq!(b.edge, 1.0);
        assert_eq!(b.min, Point3::origin());
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(bounding_cube(&PointCloud::<f64>::empty(), 0.0), Err(CloudError::Empty)));
    }

    #[test]
    fn octants_tile_parent() {
        let b = BoundingCube::new(Point3::new(-1.0f64, 0.0, 2.0), 4.0);
        let total: f64 = (0..8).map(|o| b.octant(o).volume()).sum();
        assert_eq!(total, b.volume());
        assert_eq!(b.octant(7).min, Point3::new(1.0, 2.0, 4.0));
    }
}
