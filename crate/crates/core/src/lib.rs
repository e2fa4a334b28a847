//! Volumetric change detection for multi-temporal point clouds.
//!
//! The crate builds an octree over an earlier-epoch cloud, scores nodes
//! coarse-to-fine by comparing sub-voxel density vectors between epochs,
//! filters the finest changed points by connected components and integrates
//! the change into a metric volume on a 2.5D ground grid. Supporting modules
//! cover ICP alignment with point-to-plane accuracy reports, progressive
//! bundle adjustment with a fixed reference epoch, accuracy metrics, and
//! synthetic scenes with analytic ground truth.
//!
//! Geometry is generic over [`Real`] (`f32`/`f64`); the aliases below fix the
//! double-precision types used by the CLI.

pub mod change;
pub mod cloud;
pub mod eval;
pub mod index;
pub mod posegraph;
pub mod registration;
pub mod scalar;
pub mod synth;
pub mod volume;

pub use scalar::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use cloud::{ChangeLabel, CloudFormat};

pub type Point3 = cloud::Point3<f64>;
pub type PointCloud = cloud::PointCloud<f64>;
pub type PointCloud32 = cloud::PointCloud<f32>;
pub type RigidTransform = cloud::RigidTransform<f64>;
pub type BoundingCube = cloud::BoundingCube<f64>;
pub type Octree = index::Octree<f64>;
pub type KdTree = index::KdTree<f64>;
pub type ChangeSet = change::ChangeSet<f64>;
pub type ChangeParams = change::ChangeParams<f64>;
pub type DistanceReport = registration::DistanceReport<f64>;
pub type GroundGrid = volume::GroundGrid<f64>;
pub type VolumeReport = volume::VolumeReport<f64>;
pub type Network = posegraph::Network<f64>;
pub type AdjustmentResult = posegraph::AdjustmentResult<f64>;
