//! Overlap and boundary metrics for binary masks.
//!
//! Overlap metrics (IoU, precision, recall, F1) are computed from
//! [`ConfusionCounts`]. Boundary metrics (directed/symmetric Hausdorff and the
//! percentile variant HD95) are computed by brute force over foreground point
//! sets using Euclidean distance between pixel centers, unit spacing.
//!
//! Empty point sets follow one convention throughout: two empty sets are at
//! distance 0, and when exactly one set is empty the distance is the
//! caller-supplied `empty_distance` (for masks, the raster diagonal).

use crate::error::{Error, Result};
use crate::raster::{confusion, ConfusionCounts, Mask, Point};

/// Nearest-rank percentile used for HD95.
pub const HD95_PERCENTILE: f64 = 0.95;

/// Offset inside the logarithm of the Z transform.
pub const Z_OFFSET: f64 = 1e-4;

/// Base of the Z transform logarithm.
pub const Z_BASE: f64 = 0.9;

/// Intersection over union. Two empty masks score 1.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// Precision. With no predicted foreground the score is 1 if the truth is
/// also empty and 0 otherwise.
pub fn precision(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp;
    if denom == 0 {
        if c.fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / denom as f64
    }
}

/// Recall. With no true foreground the score is 1 if the prediction is also
/// empty and 0 otherwise.
pub fn recall(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fn_;
    if denom == 0 {
        if c.fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / denom as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn squared_distance(a: Point, b: Point) -> u64 {
    let dr = a.0.abs_diff(b.0) as u64;
    let dc = a.1.abs_diff(b.1) as u64;
    dr * dr + dc * dc
}

/// Distance from every point of `from` to its nearest point of `to`, in the
/// order of `from`. `to` must be nonempty.
fn nearest_distances(from: &[Point], to: &[Point]) -> Vec<f64> {
    debug_assert!(!to.is_empty());
    from.iter()
        .map(|&a| {
            let mut best = u64::MAX;
            for &b in to {
                let d = squared_distance(a, b);
                if d < best {
                    best = d;
                    if d == 0 {
                        break;
                    }
                }
            }
            (best as f64).sqrt()
        })
        .collect()
}

fn empty_case(a: &[Point], b: &[Point], empty_distance: f64) -> Option<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Some(0.0),
        (true, false) | (false, true) => Some(empty_distance),
        (false, false) => None,
    }
}

/// Greatest distance from a point of `a` to its nearest point of `b`.
pub fn directed_hausdorff(a: &[Point], b: &[Point], empty_distance: f64) -> f64 {
    if let Some(d) = empty_case(a, b, empty_distance) {
        return d;
    }
    nearest_distances(a, b).into_iter().fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance, the larger of the two directed distances.
pub fn hausdorff(a: &[Point], b: &[Point], empty_distance: f64) -> f64 {
    directed_hausdorff(a, b, empty_distance).max(directed_hausdorff(b, a, empty_distance))
}

/// 1-based nearest rank `ceil(q * m)`, clamped to `[1, m]`.
///
/// A 1e-9 slack absorbs products such as `0.95 * 100` landing one ulp above
/// an integer.
pub fn nearest_rank(q: f64, m: usize) -> usize {
    let rank = (q * m as f64 - 1e-9).ceil();
    (rank.max(1.0) as usize).min(m)
}

fn directed_percentile(a: &[Point], b: &[Point], q: f64) -> f64 {
    let mut d = nearest_distances(a, b);
    d.sort_by(f64::total_cmp);
    d[nearest_rank(q, d.len()) - 1]
}

/// Percentile Hausdorff distance: in each direction the nearest-rank `q`
/// percentile of the sorted nearest-point distances, then the larger of the
/// two directions.
pub fn hausdorff_percentile(a: &[Point], b: &[Point], q: f64, empty_distance: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile {q} must lie in (0, 1]"
        )));
    }
    if let Some(d) = empty_case(a, b, empty_distance) {
        return Ok(d);
    }
    Ok(directed_percentile(a, b, q).max(directed_percentile(b, a, q)))
}

/// 95th-percentile Hausdorff distance.
pub fn hd95(a: &[Point], b: &[Point], empty_distance: f64) -> f64 {
    hausdorff_percentile(a, b, HD95_PERCENTILE, empty_distance)
        .expect("0.95 is a valid percentile")
}

/// Dataset-level boundary score: the sum of `log10(hd95 + 1)` over slices.
pub fn aggregate_h(hd95_values: &[f64]) -> f64 {
    hd95_values.iter().map(|&v| (v + 1.0).log10()).sum()
}

/// Spreads IoU values just below the optimum for display:
/// `log_0.9 |iou - max_iou - 0.0001|`.
///
/// `max_iou` must be the true maximum; an `iou_value` above it is rejected.
pub fn z_transform(iou_value: f64, max_iou: f64) -> Result<f64> {
    if iou_value.is_nan() || max_iou.is_nan() || iou_value > max_iou {
        return Err(Error::InvalidArgument(format!(
            "IoU {iou_value} exceeds the reference maximum {max_iou}"
        )));
    }
    Ok((iou_value - max_iou - Z_OFFSET).abs().ln() / Z_BASE.ln())
}

/// Per-slice evaluation result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hd95: f64,
}

impl MetricsRecord {
    /// Fills the overlap fields from counts; the boundary field is supplied.
    pub fn from_counts(c: &ConfusionCounts, hd95: f64) -> Self {
        let p = precision(c);
        let r = recall(c);
        MetricsRecord {
            iou: iou(c),
            precision: p,
            recall: r,
            f1: f1(p, r),
            hd95,
        }
    }
}

/// Scores one predicted mask against its truth.
pub fn slice_metrics(prediction: &Mask, truth: &Mask) -> Result<MetricsRecord> {
    slice_metrics_with_percentile(prediction, truth, HD95_PERCENTILE)
}

/// As [`slice_metrics`], with a configurable boundary percentile.
pub fn slice_metrics_with_percentile(
    prediction: &Mask,
    truth: &Mask,
    percentile: f64,
) -> Result<MetricsRecord> {
    let c = confusion(prediction, truth)?;
    let hd = hausdorff_percentile(
        &prediction.foreground_points(),
        &truth.foreground_points(),
        percentile,
        truth.diagonal(),
    )?;
    Ok(MetricsRecord::from_counts(&c, hd))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts::new(tp, fp, fn_, 0)
    }

    #[test]
    fn iou_cases() {
        assert_eq!(iou(&counts(5, 0, 0)), 1.0);
        assert_eq!(iou(&counts(1, 1, 2)), 0.25);
        assert_eq!(iou(&counts(0, 3, 4)), 0.0);
        assert_eq!(iou(&counts(0, 0, 0)), 1.0);
    }

    #[test]
    fn precision_cases() {
        assert_eq!(precision(&counts(3, 1, 0)), 0.75);
        assert_eq!(precision(&counts(0, 0, 0)), 1.0);
        assert_eq!(precision(&counts(0, 0, 7)), 0.0);
    }

    #[test]
    fn recall_cases() {
        assert_eq!(recall(&counts(3, 0, 1)), 0.75);
        assert_eq!(recall(&counts(0, 0, 0)), 1.0);
        assert_eq!(recall(&counts(2, 0, 0)), 1.0);
        assert_eq!(recall(&counts(0, 4, 0)), 0.0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1(1.0, 1.0), 1.0);
        assert_eq!(f1(0.5, 0.5), 0.5);
        assert!((f1(1.0, 0.25) - 0.4).abs() < 1e-15);
        assert_eq!(f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn directed_cases() {
        let ab = [(0, 0), (3, 4)];
        assert_eq!(directed_hausdorff(&ab, &ab, 99.0), 0.0);
        assert_eq!(directed_hausdorff(&[(0, 0)], &[(3, 4)], 99.0), 5.0);
        assert_eq!(directed_hausdorff(&[(0, 0), (0, 1)], &[(0, 0)], 99.0), 1.0);
    }

    #[test]
    fn symmetric_cases() {
        let a = [(0, 0)];
        let b = [(0, 0), (0, 2)];
        assert_eq!(directed_hausdorff(&a, &b, 99.0), 0.0);
        assert_eq!(directed_hausdorff(&b, &a, 99.0), 2.0);
        assert_eq!(hausdorff(&a, &b, 99.0), 2.0);
        assert!((hausdorff(&[(0, 0)], &[(2, 3)], 99.0) - 3.605_551_275_463_989).abs() < EPS);
    }

    #[test]
    fn empty_set_convention() {
        assert_eq!(hausdorff(&[], &[], 7.0), 0.0);
        assert_eq!(hausdorff(&[(1, 1)], &[], 7.0), 7.0);
        assert_eq!(directed_hausdorff(&[], &[(1, 1)], 7.0), 7.0);
        assert_eq!(hd95(&[], &[(1, 1)], 7.0), 7.0);
        assert_eq!(hd95(&[], &[], 7.0), 0.0);
    }

    #[test]
    fn hd95_twenty_unit_distances() {
        // Only four lattice points sit at distance 1 from a single point, so
        // the twenty sources repeat them.
        let b = [(5, 5)];
        let ring = [(4, 5), (6, 5), (5, 4), (5, 6)];
        let a: Vec<Point> = ring.iter().cycle().take(20).copied().collect();
        assert_eq!(hd95(&a, &b, 99.0), 1.0);
    }

    #[test]
    fn hd95_ignores_top_five_percent() {
        // 19 points at distance 1 and one outlier at distance 10: rank
        // ceil(0.95 * 20) = 19 picks a unit distance in the A -> B direction,
        // but B -> A is still 1, so the outlier is filtered.
        let b = [(10, 10)];
        let mut a: Vec<Point> = [(9, 10), (11, 10), (10, 9), (10, 11)]
            .iter()
            .cycle()
            .take(19)
            .copied()
            .collect();
        a.push((0, 10));
        assert_eq!(hd95(&a, &b, 99.0), 1.0);
        assert_eq!(hausdorff(&a, &b, 99.0), 10.0);
    }

    #[test]
    fn nearest_rank_values() {
        assert_eq!(nearest_rank(0.95, 20), 19);
        assert_eq!(nearest_rank(0.95, 100), 95);
        assert_eq!(nearest_rank(0.95, 1), 1);
        assert_eq!(nearest_rank(0.95, 21), 20);
        assert_eq!(nearest_rank(1.0, 7), 7);
        assert_eq!(nearest_rank(0.01, 7), 1);
    }

    #[test]
    fn percentile_rejects_bad_q() {
        assert!(hausdorff_percentile(&[(0, 0)], &[(0, 0)], 0.0, 1.0).is_err());
        assert!(hausdorff_percentile(&[(0, 0)], &[(0, 0)], 1.5, 1.0).is_err());
    }

    #[test]
    fn aggregate_h_cases() {
        assert_eq!(aggregate_h(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(aggregate_h(&[9.0]), 1.0);
        assert!((aggregate_h(&[9.0, 99.0, 0.0]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn z_transform_cases() {
        // ln(1e-4) / ln(0.9), 40-digit evaluation: 87.41738130713133025...
        let at_max = z_transform(0.7, 0.7).unwrap();
        assert!((at_max - 87.417_381_307_131_33).abs() < 1e-9);
        assert!((z_transform(0.9, 0.9 + 0.8999).unwrap() - 1.0).abs() < 1e-9);
        // log_0.9(0.0199), 40-digit evaluation: 37.17745231973651981...
        assert!((z_transform(0.5, 0.5198).unwrap() - 37.177_452_319_736_52).abs() < 1e-6);
        assert!(z_transform(0.8, 0.7).is_err());
        assert!(z_transform(f64::NAN, 0.7).is_err());
    }

    #[test]
    fn slice_metrics_identity_and_empty() {
        let m = Mask::from_points(5, 5, &[(1, 1), (1, 2), (2, 2)]).unwrap();
        let r = slice_metrics(&m, &m).unwrap();
        assert_eq!((r.iou, r.precision, r.recall, r.f1, r.hd95), (1.0, 1.0, 1.0, 1.0, 0.0));
        let e = Mask::empty(5, 5).unwrap();
        let r = slice_metrics(&e, &e).unwrap();
        assert_eq!((r.iou, r.precision, r.recall, r.f1, r.hd95), (1.0, 1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn slice_metrics_missed_lesion_uses_diagonal() {
        let truth = Mask::from_points(10, 10, &[(4, 4), (4, 5)]).unwrap();
        let r = slice_metrics(&Mask::empty(10, 10).unwrap(), &truth).unwrap();
        assert_eq!(r.iou, 0.0);
        assert!((r.hd95 - 12.727_922_061_357_855).abs() < EPS);
    }

    #[test]
    fn slice_metrics_shape_error() {
        let a = Mask::empty(4, 4).unwrap();
        let b = Mask::empty(4, 5).unwrap();
        assert!(slice_metrics(&a, &b).is_err());
    }
}
