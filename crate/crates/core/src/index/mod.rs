//! Spatial indexing: the reference octree and exact neighbor queries.

mod kdtree;
pub mod morton;
mod octree;

pub use kdtree::{KdTree, Neighbor};
pub use octree::{build_octree, code_span, NodeId, NodeRef, Octree, MAX_OCTREE_DEPTH};

use crate::cloud::{Point3, PointCloud};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("cannot index an empty cloud")]
    EmptyCloud,
    #[error("octree depth {0} outside [1, {MAX_OCTREE_DEPTH}]")]
    DepthOutOfRange(u32),
    #[error("requested depth {requested} exceeds tree depth {max}")]
    QueryDepth { requested: u32, max: u32 },
    #[error("k = {k} exceeds point count {len}")]
    TooManyNeighbors { k: usize, len: usize },
    #[error("search radius must be positive")]
    NonPositiveRadius,
}

/// The `k` nearest points of `cloud` to `query`, nearest first, ties by lower index.
pub fn knn<T: Real>(cloud: &PointCloud<T>, query: &Point3<T>, k: usize) -> Result<Vec<Neighbor<T>>, IndexError> {
    KdTree::build(cloud.points())?.knn(query, k)
}

/// Indices of all points within distance `radius` of `query`, ascending.
pub fn radius_neighbors<T: Real>(cloud: &PointCloud<T>, query: &Point3<T>, radius: T) -> Result<Vec<usize>, IndexError> {
    if cloud.is_empty() {
        return if radius > T::zero() { Ok(Vec::new()) } else { Err(IndexError::NonPositiveRadius) };
    }
    KdTree::build(cloud.points())?.within(query, radius)
}
