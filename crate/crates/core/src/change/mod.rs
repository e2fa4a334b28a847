//! Hierarchical volumetric change detection.
//!
//! Nodes of an octree built on the earlier epoch are scored by the squared
//! distance between the sub-voxel density vectors of both epochs. Scoring
//! starts at a coarse depth and only descends into nodes whose score reaches
//! the threshold, down to the finest depth. Changed points of both epochs are
//! then cleaned with Euclidean connected components.

mod components;
mod density;
mod detect;

pub use components::{component_filter, Components};
pub use density::{density_feature, feature_distance, DensityFeature};
pub use detect::{detect_with_tree, hierarchical_detect, typical_spacing, ChangeSet, ChangedVoxel, LevelStats};

use serde::{Deserialize, Serialize};

use crate::index::{IndexError, MAX_OCTREE_DEPTH};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChangeError {
    #[error("{0} cloud is empty")]
    EmptyCloud(&'static str),
    #[error("invalid change parameters: {0}")]
    InvalidParams(String),
    #[error("feature vectors differ in length ({0} vs {1})")]
    MismatchedFeatures(usize, usize),
    #[error("bounds have non-positive edge length")]
    DegenerateBounds,
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Default score threshold, in (points/m³)² after normalization by the
/// feature length. Calibrated on the synthetic demolition scenes.
pub const DEFAULT_THRESHOLD: f64 = 3.0e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default, deny_unknown_fields)]
pub struct ChangeParams<T: Real> {
    /// First (coarsest) depth at which nodes are scored.
    pub start_depth: u32,
    /// Finest depth; changed voxels live here.
    pub max_depth: u32,
    /// Sub-voxels per axis of a density feature (N = m³).
    pub subdivisions: usize,
    /// Score threshold applied at every depth unless overridden.
    pub threshold: T,
    /// Optional per-depth thresholds for `start_depth..=max_depth`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub depth_thresholds: Vec<T>,
    /// Divide the squared distance by N. Turning this off gives the raw sum.
    pub normalize: bool,
    /// Octree subdivision threshold on the reference cloud.
    pub min_points_to_split: usize,
    /// Linking radius of the component filter; `None` derives it from the data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component_radius: Option<T>,
    /// Clusters smaller than this are discarded.
    pub component_min_size: usize,
}

impl<T: Real> Default for ChangeParams<T> {
    fn default() -> Self {
        ChangeParams {
            start_depth: 7,
            max_depth: 11,
            subdivisions: 2,
            threshold: T::lit(DEFAULT_THRESHOLD),
            depth_thresholds: Vec::new(),
            normalize: true,
            min_points_to_split: 1,
            component_radius: None,
            component_min_size: 50,
        }
    }
}

impl<T: Real> ChangeParams<T> {
    pub fn validate(&self) -> Result<(), ChangeError> {
        let bad = |m: String| Err(ChangeError::InvalidParams(m));
        if self.start_depth < 1 || self.start_depth > self.max_depth {
            return bad(format!(
                "need 1 <= start_depth ({}) <= max_depth ({})",
                self.start_depth, self.max_depth
            ));
        }
        if self.max_depth > MAX_OCTREE_DEPTH {
            return bad(format!("max_depth {} exceeds {MAX_OCTREE_DEPTH}", self.max_depth));
        }
        if self.subdivisions < 1 {
            return bad("subdivisions must be at least 1".into());
        }
        if !(self.threshold > T::zero()) {
            return bad("threshold must be positive".into());
        }
        let levels = (self.max_depth - self.start_depth + 1) as usize;
        if !self.depth_thresholds.is_empty() {
            if self.depth_thresholds.len() != levels {
                return bad(format!(
                    "depth_thresholds has {} entries, expected {levels}",
                    self.depth_thresholds.len()
                ));
            }
            if self.depth_thresholds.iter().any(|t| !(*t > T::zero())) {
                return bad("depth_thresholds must be positive".into());
            }
        }
        if let Some(r) = self.component_radius {
            if !(r > T::zero()) {
                return bad("component_radius must be positive".into());
            }
        }
        if self.component_min_size < 1 {
            return bad("component_min_size must be at least 1".into());
        }
        Ok(())
    }

    /// Threshold in force at `depth`.
    pub fn threshold_at(&self, depth: u32) -> T {
        if self.depth_thresholds.is_empty() || depth < self.start_depth {
            self.threshold
        } else {
            self.depth_thresholds[((depth - self.start_depth) as usize).min(self.depth_thresholds.len() - 1)]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let p = ChangeParams::<f64>::default();
        p.validate().unwrap();
        assert_eq!((p.start_depth, p.max_depth, p.subdivisions), (7, 11, 2));
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = ChangeParams::<f64>::default();
        p.start_depth = 12;
        assert!(p.validate().is_err());
        let mut p = ChangeParams::<f64>::default();
        p.threshold = 0.0;
        assert!(p.validate().is_err());
        let mut p = ChangeParams::<f64>::default();
        p.depth_thresholds = vec![1.0; 3];
        assert!(p.validate().is_err());
        p.depth_thresholds = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        p.validate().unwrap();
        assert_eq!(p.threshold_at(9), 3.0);
    }
}
