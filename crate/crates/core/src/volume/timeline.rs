use serde::{Deserialize, Serialize};

use super::{change_volume, GroundGrid, VolumeError};
use crate::scalar::Real;

/// An acquisition: a label and its time in days on any fixed origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Epoch<T: Real> {
    pub label: String,
    pub day: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IntervalVolume<T: Real> {
    pub from: String,
    pub to: String,
    pub days: T,
    pub volume: T,
    pub cumulative: T,
    /// m³ per day.
    pub rate: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VolumeReport<T: Real> {
    pub intervals: Vec<IntervalVolume<T>>,
    pub total: T,
}

/// Per-interval volume, running total and daily rate for consecutive epochs;
/// `grids[i]` covers `epochs[i]..epochs[i + 1]`.
pub fn timeline_report<T: Real>(epochs: &[Epoch<T>], grids: &[GroundGrid<T>]) -> Result<VolumeReport<T>, VolumeError> {
    let volumes: Vec<T> = grids.iter().map(change_volume).collect();
    timeline_from_volumes(epochs, &volumes)
}

pub(crate) fn timeline_from_volumes<T: Real>(epochs: &[Epoch<T>], volumes: &[T]) -> Result<VolumeReport<T>, VolumeError> {
    if epochs.len() < 2 {
        return Err(VolumeError::TooFewEpochs);
    }
    if volumes.len() + 1 != epochs.len() {
        return Err(VolumeError::LengthMismatch { epochs: epochs.len(), grids: volumes.len() });
    }
    if let Some(i) = (1..epochs.len()).find(|&i| !(epochs[i].day > epochs[i - 1].day)) {
        return Err(VolumeError::NonMonotoneTimestamps { index: i });
    }
    let mut cumulative = T::zero();
    let intervals = epochs
        .windows(2)
        .zip(volumes)
        .map(|(w, &volume)| {
            cumulative += volume;
            let days = w[1].day - w[0].day;
            IntervalVolume {
                from: w[0].label.clone(),
                to: w[1].label.clone(),
                days,
                volume,
                cumulative,
                rate: volume / days,
            }
        })
        .collect();
    Ok(VolumeReport { intervals, total: cumulative })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(day: f64) -> Epoch<f64> {
        Epoch { label: format!("d{day}"), day }
    }

    #[test]
    fn single_interval() {
        let r = timeline_from_volumes(&[ep(0.0), ep(2.0)], &[10.0]).unwrap();
        assert_eq!(r.intervals[0].rate, 5.0);
        assert_eq!(r.intervals[0].cumulative, 10.0);
        assert_eq!(r.total, 10.0);
    }

    #[test]
    fn zero_volumes() {
        let r = timeline_from_volumes(&[ep(0.0), ep(1.0), ep(3.0)], &[0.0, 0.0]).unwrap();
        assert!(r.intervals.iter().all(|i| i.cumulative == 0.0));
    }

    #[test]
    fn errors() {
        assert_eq!(timeline_from_volumes(&[ep(0.0)], &[]), Err(VolumeError::TooFewEpochs));
        assert_eq!(
            timeline_from_volumes(&[ep(0.0), ep(1.0), ep(1.0)], &[0.0, 0.0]),
            Err(VolumeError::NonMonotoneTimestamps { index: 2 })
        );
        assert!(matches!(
            timeline_from_volumes(&[ep(0.0), ep(1.0)], &[]),
            Err(VolumeError::LengthMismatch { .. })
        ));
    }
}
