//! Rigid cloud-to-cloud alignment (point-to-point ICP) and point-to-plane
//! accuracy reports.

mod distance;
mod icp;

pub use distance::{point_to_plane_distances, summarize_unchanged_region, DistanceReport};
pub use icp::{icp_align, kabsch, IcpParams, IcpResult, Termination};

use crate::index::IndexError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistrationError {
    #[error("source or target cloud is empty")]
    EmptyCloud,
    #[error("only {0} usable correspondences (need 3 non-collinear)")]
    DegenerateCorrespondences(usize),
    #[error("invalid ICP parameters: {0}")]
    InvalidParams(String),
    #[error("reference has {len} points, fewer than k = {k} (k must be at least 3)")]
    TooFewReferencePoints { len: usize, k: usize },
    #[error("region contains no points of {0}")]
    EmptyRegion(&'static str),
    #[error(transparent)]
    Index(#[from] IndexError),
}
