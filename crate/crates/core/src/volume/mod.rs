//! 2.5D ground-grid volume of detected change and multi-epoch timelines.

mod grid;
mod timeline;

pub use grid::{build_ground_grid, change_volume, CellKind, GridCell, GroundGrid};
pub use timeline::{timeline_report, Epoch, IntervalVolume, VolumeReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VolumeError {
    #[error("grid cell size must be positive")]
    NonPositiveCellSize,
    #[error("changed index {index} out of range for the {which} cloud ({len} points)")]
    IndexOutOfRange { which: &'static str, index: usize, len: usize },
    #[error("timestamps must strictly increase (epoch {index})")]
    NonMonotoneTimestamps { index: usize },
    #[error("{epochs} epochs need {} grids, got {grids}", .epochs.saturating_sub(1))]
    LengthMismatch { epochs: usize, grids: usize },
    #[error("a timeline needs at least two epochs")]
    TooFewEpochs,
}
