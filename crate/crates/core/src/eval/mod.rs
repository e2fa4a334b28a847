//! Point-level change metrics and distance statistics.

use serde::{Deserialize, Serialize};

use crate::cloud::ChangeLabel;
use crate::registration::DistanceReport;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("predicted has {predicted} labels, truth has {truth}")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no distances to summarize")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    /// Points whose truth label is `Unknown`; not part of the tally.
    pub excluded: u64,
}

impl ConfusionCounts {
    pub fn evaluated(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Tallies per-point predictions against truth. Any label other than
/// `Unchanged`/`Unknown` counts as changed.
pub fn confusion_counts(predicted: &[ChangeLabel], truth: &[ChangeLabel]) -> Result<ConfusionCounts, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch { predicted: predicted.len(), truth: truth.len() });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        if t == ChangeLabel::Unknown {
            c.excluded += 1;
            continue;
        }
        match (p.is_change(), t.is_change()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeMetrics {
    pub iou: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn change_metrics(c: &ConfusionCounts) -> ChangeMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ChangeMetrics { iou: ratio(c.tp, c.tp + c.fp + c.fn_), precision, recall, f1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DistanceStats<T: Real> {
    pub count: usize,
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
    pub p50: T,
    pub p90: T,
    pub p95: T,
    pub max: T,
}

/// Percentile of sorted data with linear interpolation between ranks.
pub fn percentile<T: Real>(sorted: &[T], q: f64) -> T {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * w
}

pub fn distance_stats<T: Real>(report: &DistanceReport<T>) -> Result<DistanceStats<T>, EvalError> {
    summarize(&report.distances)
}

pub fn summarize<T: Real>(values: &[T]) -> Result<DistanceStats<T>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = T::from_count(values.len());
    let mean = values.iter().fold(T::zero(), |s, &v| s + v) / n;
    let var = values.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    Ok(DistanceStats {
        count: values.len(),
        mean,
        std: var.sqrt(),
        p50: percentile(&sorted, 0.5),
        p90: percentile(&sorted, 0.9),
        p95: percentile(&sorted, 0.95),
        max: sorted[sorted.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChangeLabel::*;

    #[test]
    fn perfect_prediction() {
        let truth: Vec<_> = (0..200).map(|i| if i < 100 { Changed } else { Unchanged }).collect();
        let c = confusion_counts(&truth, &truth).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (100, 100, 0, 0));
        let m = change_metrics(&c);
        assert_eq!([m.iou, m.precision, m.recall, m.f1], [Some(1.0); 4]);
    }

    #[test]
    fn unknown_excluded_and_undefined_metrics() {
        let c = confusion_counts(&[Unchanged, Changed, Unchanged], &[Changed, Unknown, Unchanged]).unwrap();
        assert_eq!((c.fn_, c.tn, c.excluded), (1, 1, 1));
        let m = change_metrics(&c);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
        assert!(confusion_counts(&[Changed], &[]).is_err());
    }

    #[test]
    fn stats() {
        let s = summarize(&[0.1f64, 0.1, 0.1]).unwrap();
        assert!((s.mean - 0.1).abs() < 1e-15 && s.std.abs() < 1e-15);
        let s = summarize(&[0.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.std, s.p50), (1.0, 1.0, 1.0));
        assert_eq!(summarize::<f64>(&[]), Err(EvalError::Empty));
    }
}
