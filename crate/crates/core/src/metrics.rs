//! Segmentation overlap, boundary distance, CIMT error and risk
//! classification metrics.

use crate::error::{Error, Result};
use crate::geometry::{cimt_mm, point_polyline_distance, Contour, Kappa, ThicknessProfile};
use crate::grid::WallMask;

/// Default bin count for [`expected_calibration_error`].
pub const DEFAULT_ECE_BINS: usize = 10;

/// Foreground counts for a pair of masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapCounts {
    pub a: usize,
    pub b: usize,
    pub intersection: usize,
}

impl OverlapCounts {
    pub fn union(&self) -> usize {
        self.a + self.b - self.intersection
    }
}

pub fn overlap_counts(a: &WallMask, b: &WallMask) -> Result<OverlapCounts> {
    a.ensure_same_shape(b)?;
    let mut counts = OverlapCounts {
        a: 0,
        b: 0,
        intersection: 0,
    };
    for (&pa, &pb) in a.data().iter().zip(b.data()) {
        counts.a += pa as usize;
        counts.b += pb as usize;
        counts.intersection += (pa && pb) as usize;
    }
    Ok(counts)
}

/// Dice similarity `2|A∩B| / (|A|+|B|)`; 1.0 when both masks are empty.
pub fn dice(a: &WallMask, b: &WallMask) -> Result<f64> {
    let c = overlap_counts(a, b)?;
    let denom = c.a + c.b;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * c.intersection as f64 / denom as f64)
}

/// Intersection over union; 1.0 when both masks are empty.
pub fn iou(a: &WallMask, b: &WallMask) -> Result<f64> {
    let c = overlap_counts(a, b)?;
    let union = c.union();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(c.intersection as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryError {
    pub mean_symmetric_px: f64,
    pub hausdorff_px: f64,
    pub mean_symmetric_mm: Option<f64>,
    pub hausdorff_mm: Option<f64>,
}

/// Symmetric mean and Hausdorff distances between two boundaries, measuring
/// each vertex of one contour against the polyline of the other.
pub fn boundary_distance(a: &Contour, b: &Contour, kappa: Option<Kappa>) -> Result<BoundaryError> {
    if a.arc_length() == 0.0 || b.arc_length() == 0.0 {
        return Err(Error::DegenerateContour);
    }
    let directed = |from: &Contour, to: &Contour| {
        let mut sum = 0.0;
        let mut max = 0.0_f64;
        for &p in from.points() {
            let d = point_polyline_distance(p, to);
            sum += d;
            max = max.max(d);
        }
        (sum / from.len() as f64, max)
    };
    let (mean_ab, max_ab) = directed(a, b);
    let (mean_ba, max_ba) = directed(b, a);
    let mean = 0.5 * (mean_ab + mean_ba);
    let hausdorff = max_ab.max(max_ba);
    Ok(BoundaryError {
        mean_symmetric_px: mean,
        hausdorff_px: hausdorff,
        mean_symmetric_mm: kappa.map(|k| k.get() * mean),
        hausdorff_mm: kappa.map(|k| k.get() * hausdorff),
    })
}

/// Absolute difference of calibrated CIMT between prediction and ground truth.
pub fn cimt_error(pred: &ThicknessProfile, gt: &ThicknessProfile, kappa: Kappa) -> f64 {
    (cimt_mm(pred, kappa) - cimt_mm(gt, kappa)).abs()
}

fn check_scores(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("labels must be 0 or 1, got {l}")));
    }
    Ok(())
}

/// ROC AUC as the Mann–Whitney statistic `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`,
/// computed from midranks in `O(n log n)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_scores(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // sum of 1-based midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += midrank * pos_in_tie as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Confusion-matrix rates at a fixed decision threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: f64,
}

impl ClassificationReport {
    /// `key=value` lines in a fixed order.
    pub fn to_key_value(&self) -> String {
        format!(
            "accuracy={:.6}\nf1={:.6}\nsensitivity={:.6}\nspecificity={:.6}\nthreshold={:.6}\n",
            self.accuracy, self.f1, self.sensitivity, self.specificity, self.threshold
        )
    }
}

/// Predictions are `score >= threshold`. Rates with an empty denominator are 0.
pub fn classification_report(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ClassificationReport> {
    check_scores(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::OutOfRange(format!("threshold {threshold} not in (0, 1)")));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let sensitivity = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = if precision + sensitivity == 0.0 {
        0.0
    } else {
        2.0 * precision * sensitivity / (precision + sensitivity)
    };
    Ok(ClassificationReport {
        accuracy: ratio(tp + tn, scores.len()),
        f1,
        sensitivity,
        specificity: ratio(tn, tn + fp),
        threshold,
    })
}

/// Expected calibration error over `bins` equal-width bins on `[0, 1]`,
/// treating each score as the predicted probability of the positive class.
pub fn expected_calibration_error(scores: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    check_scores(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if bins == 0 {
        return Err(Error::invalid("ECE needs at least one bin"));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::OutOfRange(format!("score {s} outside [0, 1]")));
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    let mut positives = vec![0usize; bins];
    for (&s, &l) in scores.iter().zip(labels) {
        let b = ((s * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf[b] += s;
        positives[b] += l as usize;
    }
    let n = scores.len() as f64;
    let mut ece = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let nb = count[b] as f64;
        ece += nb / n * (conf[b] / nb - positives[b] as f64 / nb).abs();
    }
    Ok(ece)
}

/// Spearman rank correlation (midranks for ties). `None` when either input
/// has zero rank variance or fewer than two entries.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = midranks(a);
    let rb = midranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundarySide;
    use approx::assert_abs_diff_eq;

    fn top_half_8() -> WallMask {
        WallMask::from_fn(8, 8, |y, _| y < 4)
    }

    #[test]
    fn dice_and_iou_examples() {
        let a = top_half_8();
        let ones = WallMask::filled(8, 8, true);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_abs_diff_eq!(dice(&a, &ones).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(iou(&a, &ones).unwrap(), 0.5);
        let bottom = WallMask::from_fn(8, 8, |y, _| y >= 4);
        assert_eq!(dice(&a, &bottom).unwrap(), 0.0);
        assert_eq!(iou(&a, &bottom).unwrap(), 0.0);
        let empty = WallMask::filled(8, 8, false);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn overlap_shape_mismatch() {
        let a = WallMask::filled(4, 4, true);
        let b = WallMask::filled(4, 5, true);
        assert!(matches!(dice(&a, &b), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(iou(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn boundary_parallel_lines() {
        let a = Contour::from_xy(&[(0.0, 3.0), (5.0, 3.0), (10.0, 3.0)], BoundarySide::Li).unwrap();
        let b = Contour::from_xy(&[(0.0, 5.0), (10.0, 5.0)], BoundarySide::Li).unwrap();
        let e = boundary_distance(&a, &b, Kappa::new(0.05).ok()).unwrap();
        assert_abs_diff_eq!(e.mean_symmetric_px, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.hausdorff_px, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.mean_symmetric_mm.unwrap(), 0.1, epsilon = 1e-15);
        let same = boundary_distance(&a, &a, None).unwrap();
        assert_eq!((same.mean_symmetric_px, same.hausdorff_px), (0.0, 0.0));
        assert!(same.hausdorff_mm.is_none());
    }

    #[test]
    fn cimt_error_example() {
        let k = Kappa::new(0.1).unwrap();
        let pred = ThicknessProfile::uniform(vec![3.0; 5]).unwrap();
        let gt = ThicknessProfile::uniform(vec![4.0, 6.0]).unwrap();
        assert_abs_diff_eq!(cimt_error(&pred, &gt, k), 0.2, epsilon = 1e-15);
        assert_eq!(cimt_error(&pred, &gt, k), cimt_error(&gt, &pred, k));
        assert_eq!(cimt_error(&gt, &gt, k), 0.0);
    }

    fn pairwise_auc(s: &[f64], l: &[u8]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in s.iter().enumerate() {
            for (j, &sj) in s.iter().enumerate() {
                if l[i] == 1 && l[j] == 0 {
                    pairs += 1.0;
                    credit += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        credit / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        // positives {0.6, 0.2} against negatives {0.4, 0.6}: one win, one tie
        let (s, l) = ([0.6, 0.4, 0.6, 0.2], [1u8, 0, 0, 1]);
        assert_eq!(roc_auc(&s, &l).unwrap(), pairwise_auc(&s, &l));
        assert_eq!(roc_auc(&s, &l).unwrap(), 0.375);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::OneClassOnly)));
    }

    #[test]
    fn report_examples() {
        let r = classification_report(&[0.9, 0.8, 0.1], &[1, 1, 0], 0.5).unwrap();
        assert_eq!((r.accuracy, r.f1, r.sensitivity, r.specificity), (1.0, 1.0, 1.0, 1.0));
        let r = classification_report(&[0.9, 0.9, 0.1, 0.1], &[1, 0, 1, 0], 0.5).unwrap();
        assert_eq!((r.accuracy, r.sensitivity, r.specificity), (0.5, 0.5, 0.5));
        let r = classification_report(&[0.1, 0.2], &[0, 0], 0.5).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.specificity, 1.0);
        assert!(matches!(classification_report(&[], &[], 0.5), Err(Error::EmptyInput(_))));
        assert!(classification_report(&[0.5], &[1], 1.0).is_err());
        assert!(r.to_key_value().starts_with("accuracy=1.000000\n"));
    }

    #[test]
    fn ece_examples() {
        assert_eq!(expected_calibration_error(&[1.0; 5], &[1; 5], 10).unwrap(), 0.0);
        assert_abs_diff_eq!(
            expected_calibration_error(&[0.9; 5], &[0; 5], 10).unwrap(),
            0.9,
            epsilon = 1e-15
        );
        let labels: Vec<u8> = (0..10_000).map(|i| (i % 10 < 7) as u8).collect();
        let ece = expected_calibration_error(&vec![0.7; 10_000], &labels, 10).unwrap();
        assert!(ece < 1e-9, "{ece}");
        assert!(expected_calibration_error(&[], &[], 10).is_err());
        assert!(expected_calibration_error(&[0.5], &[1], 0).is_err());
    }

    #[test]
    fn spearman_basic() {
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }
}
