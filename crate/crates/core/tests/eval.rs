use volchange::eval::{change_metrics, confusion_counts, percentile, summarize, ConfusionCounts};
use volchange::ChangeLabel::{self, *};

/// Counts whose precision and recall round to the given values.
fn counts_for(precision: f64, recall: f64) -> ConfusionCounts {
    let tp: u64 = 100_000_000;
    let fp = (tp as f64 * (1.0 / precision - 1.0)).round() as u64;
    let fn_ = (tp as f64 * (1.0 / recall - 1.0)).round() as u64;
    ConfusionCounts { tp, fp, fn_, tn: 1_000_000_000, excluded: 0 }
}

#[test]
fn accuracy_table_rows() {
    // (precision, recall, iou, f1) as printed
    let rows = [(0.9299, 0.9153, 0.8563, 0.9225), (0.9982, 0.6886, 0.6878, 0.8150), (0.9999, 0.6440, 0.6440, 0.7834)];
    for (p, r, iou, f1) in rows {
        let m = change_metrics(&counts_for(p, r));
        assert!((m.precision.unwrap() - p).abs() < 1e-6);
        assert!((m.recall.unwrap() - r).abs() < 1e-6);
        assert!((m.f1.unwrap() - f1).abs() <= 1e-3, "{m:?}");
        assert!((m.iou.unwrap() - iou).abs() <= 1e-3, "{m:?}");
    }
}

#[test]
fn identities_hold_for_any_counts() {
    for tp in [0u64, 1, 7, 1000] {
        for fp in [0u64, 3, 500] {
            for fn_ in [0u64, 2, 900] {
                let c = ConfusionCounts { tp, fp, fn_, tn: 11, excluded: 0 };
                let m = change_metrics(&c);
                if let (Some(p), Some(r)) = (m.precision, m.recall) {
                    if p + r > 0.0 {
                        assert!((m.f1.unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-15);
                    }
                }
                if tp + fp + fn_ > 0 {
                    assert_eq!(m.iou.unwrap(), tp as f64 / (tp + fp + fn_) as f64);
                } else {
                    assert!(m.iou.is_none());
                }
            }
        }
    }
}

#[test]
fn counts_from_labels() {
    let pred = [Changed, Changed, Unchanged, Unchanged, Added, Changed, Unchanged];
    let truth = [Changed, Unchanged, Changed, Unchanged, Added, ChangeLabel::Unknown, Unchanged];
    let c = confusion_counts(&pred, &truth).unwrap();
    assert_eq!(c, ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 2, excluded: 1 });
    assert_eq!(c.evaluated(), 6);
    assert!(confusion_counts(&pred[..3], &truth).is_err());
}

#[test]
fn summary_statistics() {
    let v: Vec<f64> = (1..=101).map(|i| i as f64 / 10.0).collect();
    let s = summarize(&v).unwrap();
    assert_eq!(s.count, 101);
    assert!((s.mean - 5.1).abs() < 1e-12);
    let var = v.iter().map(|x| (x - 5.1) * (x - 5.1)).sum::<f64>() / 101.0;
    assert!((s.std - var.sqrt()).abs() < 1e-12);
    assert!((s.p50 - 5.1).abs() < 1e-12);
    assert!((s.p90 - 9.1).abs() < 1e-12);
    assert_eq!(s.max, 10.1);
    assert_eq!(percentile(&[1.0, 2.0], 0.25), 1.25);
    assert!(summarize::<f64>(&[]).is_err());
}
