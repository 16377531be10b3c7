//! Voxelwise overlap metrics: Dice, IoU, sensitivity and precision.
//!
//! Dice is the standard `2TP / (2TP + FP + FN)`. The formula sometimes
//! printed with `N_P` (predicted positives) in the denominator reduces to
//! precision and is not used here.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// Predicted-positive total.
    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    pred.check_same_dims(gt.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Dice coefficient; 1.0 when both masks are empty.
pub fn dsc(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Intersection over union; 1.0 when both masks are empty.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

pub fn sensitivity(c: &ConfusionCounts) -> Result<f64> {
    let denom = c.tp + c.fn_;
    if denom == 0 {
        return Err(Error::UndefinedMetric("sensitivity with empty ground truth"));
    }
    Ok(c.tp as f64 / denom as f64)
}

pub fn precision(c: &ConfusionCounts) -> Result<f64> {
    let denom = c.tp + c.fp;
    if denom == 0 {
        return Err(Error::UndefinedMetric("precision with empty prediction"));
    }
    Ok(c.tp as f64 / denom as f64)
}

/// The four scores reported per scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub dsc: f64,
    pub iou: f64,
    pub sensitivity: f64,
    pub precision: f64,
}

impl MetricSummary {
    /// Undefined sensitivity/precision (empty masks) collapse to the value
    /// that matches the Dice convention: 1 if both masks are empty, else 0.
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let fallback = if c.tp + c.fp + c.fn_ == 0 { 1.0 } else { 0.0 };
        MetricSummary {
            dsc: dsc(c),
            iou: iou(c),
            sensitivity: sensitivity(c).unwrap_or(fallback),
            precision: precision(c).unwrap_or(fallback),
        }
    }

    pub fn evaluate(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        Ok(Self::from_counts(&confusion(pred, gt)?))
    }

    /// Arithmetic mean over scans.
    pub fn mean(items: &[MetricSummary]) -> Option<Self> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let sum = |f: fn(&MetricSummary) -> f64| items.iter().map(f).sum::<f64>() / n;
        Some(MetricSummary {
            dsc: sum(|m| m.dsc),
            iou: sum(|m| m.iou),
            sensitivity: sum(|m| m.sensitivity),
            precision: sum(|m| m.precision),
        })
    }
}

pub const METRIC_CSV_HEADER: &str = "scan_id,dsc,iou,sensitivity,precision";

/// Renders the per-scan metric table with 4-decimal fixed formatting.
pub fn metrics_csv(rows: &[(String, MetricSummary)]) -> String {
    let mut out = String::from(METRIC_CSV_HEADER);
    out.push('\n');
    for (id, m) in rows {
        writeln!(
            out,
            "{id},{:.4},{:.4},{:.4},{:.4}",
            m.dsc, m.iou, m.sensitivity, m.precision
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn identical_masks() {
        let m = BinaryMask::from_fn([4, 4, 4], Spacing::default(), |z, y, x| z * 16 + y * 4 + x < 10);
        let c = confusion(&m, &m).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 10, fp: 0, fn_: 0, tn: 54 });
        assert_eq!(dsc(&c), 1.0);
        assert_eq!(iou(&c), 1.0);
        assert_eq!(sensitivity(&c).unwrap(), 1.0);
        assert_eq!(precision(&c).unwrap(), 1.0);
    }

    #[test]
    fn empty_prediction() {
        let gt = BinaryMask::from_fn([2, 2, 2], Spacing::default(), |z, y, x| !(z == 1 && y == 1 && x == 1));
        let pred = BinaryMask::empty([2, 2, 2], Spacing::default());
        let c = confusion(&pred, &gt).unwrap();
        assert_eq!((c.tp, c.fn_), (0, 7));
        assert!(matches!(precision(&c), Err(Error::UndefinedMetric(_))));
        assert_eq!(sensitivity(&c).unwrap(), 0.0);
    }

    #[test]
    fn hand_arithmetic() {
        let c = counts(3, 1, 2);
        assert!((dsc(&c) - 6.0 / 9.0).abs() < 1e-15);
        assert!((iou(&c) - 0.5).abs() < 1e-15);
        assert!((sensitivity(&c).unwrap() - 0.6).abs() < 1e-15);
        assert!((precision(&c).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn degenerate_conventions() {
        let c = counts(0, 0, 0);
        assert_eq!(dsc(&c), 1.0);
        assert_eq!(iou(&c), 1.0);
        assert!(sensitivity(&c).is_err());
        assert!(precision(&c).is_err());
        assert_eq!(dsc(&counts(0, 4, 5)), 0.0);
    }

    #[test]
    fn dims_mismatch() {
        let a = BinaryMask::empty([2, 2, 2], Spacing::default());
        let b = BinaryMask::empty([2, 2, 3], Spacing::default());
        assert!(confusion(&a, &b).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![(
            "s0".to_string(),
            MetricSummary { dsc: 1.0, iou: 1.0, sensitivity: 1.0, precision: 1.0 },
        ), (
            "fully".to_string(),
            MetricSummary { dsc: 0.855, iou: 0.747, sensitivity: 0.832, precision: 0.880 },
        )];
        assert_eq!(
            metrics_csv(&rows),
            "scan_id,dsc,iou,sensitivity,precision\ns0,1.0000,1.0000,1.0000,1.0000\nfully,0.8550,0.7470,0.8320,0.8800\n"
        );
    }
}
