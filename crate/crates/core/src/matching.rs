//! Associating detections with ground-truth parts.
//!
//! Recall metrics use [`hit_test`]: a part counts as detected when any
//! same-class detection in its image overlaps it at the threshold. AP uses
//! [`greedy_ap_match`], the usual score-ordered rule where each ground
//! truth absorbs at most one detection.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::iou;
use crate::model::{Dataset, Detection, PartAnnotation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub detected: bool,
    pub best_iou: f64,
    /// Index into the detection slice handed to [`hit_test`].
    pub matched_detection_index: Option<usize>,
}

/// Tests one ground-truth part against the detections of its image and class.
///
/// Detections scoring below `score_threshold` are ignored. The best match is
/// the highest IoU, ties going to the higher score and then the lower index.
pub fn hit_test(
    gt: &PartAnnotation,
    dets: &[&Detection],
    t: f64,
    score_threshold: f64,
) -> MatchResult {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, d) in dets.iter().enumerate() {
        if d.score < score_threshold {
            continue;
        }
        let v = iou(&gt.bbox, &d.bbox);
        let better = match best {
            None => true,
            Some((_, bv, bs)) => v > bv || (v == bv && d.score > bs),
        };
        if better {
            best = Some((i, v, d.score));
        }
    }
    match best {
        Some((i, v, _)) if v >= t => MatchResult {
            detected: true,
            best_iou: v,
            matched_detection_index: Some(i),
        },
        Some((_, v, _)) => MatchResult { detected: false, best_iou: v, matched_detection_index: None },
        None => MatchResult { detected: false, best_iou: 0.0, matched_detection_index: None },
    }
}

/// TP/FP labels for one class at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApFlags {
    /// Input indices in processing order (descending score).
    pub order: Vec<usize>,
    /// `true` for a true positive, aligned with `order`.
    pub true_positive: Vec<bool>,
    pub n_gt: usize,
}

impl ApFlags {
    pub fn tp_count(&self) -> usize {
        self.true_positive.iter().filter(|&&f| f).count()
    }
}

/// Processing order for AP: score descending, then image id, then box.
pub fn ap_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| a.bbox.total_cmp(&b.bbox))
}

/// Greedy score-ordered matching of one class's detections to its ground
/// truths. Each detection takes the unmatched same-image ground truth with
/// the highest IoU at or above `t`.
pub fn greedy_ap_match(dets: &[&Detection], gts: &[&PartAnnotation], t: f64) -> ApFlags {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| ap_order(dets[i], dets[j]));

    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (g, gt) in gts.iter().enumerate() {
        by_image.entry(gt.image_id.as_str()).or_default().push(g);
    }
    let mut taken = alloc::vec![false; gts.len()];

    let true_positive = order
        .iter()
        .map(|&i| {
            let d = dets[i];
            let Some(candidates) = by_image.get(d.image_id.as_str()) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &g in candidates {
                if taken[g] {
                    continue;
                }
                let v = iou(&gts[g].bbox, &d.bbox);
                if v >= t && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect();

    ApFlags { order, true_positive, n_gt: gts.len() }
}

/// Detection indices bucketed by (image, class) of a dataset.
///
/// Detections naming an unknown image or class are left out.
#[derive(Debug, Clone)]
pub struct DetectionIndex {
    n_classes: usize,
    cells: Vec<Vec<usize>>,
    per_class: Vec<Vec<usize>>,
}

impl DetectionIndex {
    pub fn build(dataset: &Dataset, dets: &[Detection]) -> Self {
        let n_classes = dataset.vocabulary().len();
        let mut cells = alloc::vec![Vec::new(); dataset.images().len() * n_classes];
        let mut per_class = alloc::vec![Vec::new(); n_classes];
        for (i, d) in dets.iter().enumerate() {
            let (Some(img), Some(cls)) =
                (dataset.image_index(&d.image_id), dataset.class_index(&d.part_class))
            else {
                continue;
            };
            cells[img * n_classes + cls].push(i);
            per_class[cls].push(i);
        }
        Self { n_classes, cells, per_class }
    }

    pub fn cell(&self, image: usize, class: usize) -> &[usize] {
        self.cells.get(image * self.n_classes + class).map_or(&[], Vec::as_slice)
    }

    pub fn class(&self, class: usize) -> &[usize] {
        self.per_class.get(class).map_or(&[], Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::model::PartState;
    use alloc::string::ToString;
    use alloc::vec;

    fn gt(image: &str, b: [f64; 4]) -> PartAnnotation {
        PartAnnotation {
            image_id: image.to_string(),
            part_class: "bell".to_string(),
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
            state: PartState::Intact,
        }
    }

    fn det(image: &str, b: [f64; 4], score: f64) -> Detection {
        Detection {
            image_id: image.to_string(),
            part_class: "bell".to_string(),
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
            score,
        }
    }

    #[test]
    fn identical_box_hits() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let d = det("a", [0.0, 0.0, 10.0, 10.0], 0.3);
        let r = hit_test(&g, &[&d], 0.5, 0.0);
        assert_eq!(r, MatchResult { detected: true, best_iou: 1.0, matched_detection_index: Some(0) });
    }

    #[test]
    fn no_detections_misses() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let r = hit_test(&g, &[], 0.0, 0.0);
        assert_eq!(r, MatchResult { detected: false, best_iou: 0.0, matched_detection_index: None });
    }

    #[test]
    fn best_iou_wins_over_score() {
        // gt 10x10; first det IoU 0.3, second 0.6
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let d0 = det("a", [0.0, 0.0, 10.0, 3.0], 0.9);
        let d1 = det("a", [0.0, 0.0, 10.0, 6.0], 0.4);
        assert!((iou(&g.bbox, &d0.bbox) - 0.3).abs() < 1e-12);
        assert!((iou(&g.bbox, &d1.bbox) - 0.6).abs() < 1e-12);
        let r = hit_test(&g, &[&d0, &d1], 0.5, 0.0);
        assert!(r.detected);
        assert!((r.best_iou - 0.6).abs() < 1e-12);
        assert_eq!(r.matched_detection_index, Some(1));
    }

    #[test]
    fn ties_prefer_score_then_index() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let lo = det("a", [0.0, 0.0, 10.0, 5.0], 0.2);
        let hi = det("a", [0.0, 5.0, 10.0, 10.0], 0.8);
        assert_eq!(hit_test(&g, &[&lo, &hi], 0.1, 0.0).matched_detection_index, Some(1));
        assert_eq!(hit_test(&g, &[&lo, &lo], 0.1, 0.0).matched_detection_index, Some(0));
    }

    #[test]
    fn score_threshold_filters() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let d = det("a", [0.0, 0.0, 10.0, 10.0], 0.3);
        let r = hit_test(&g, &[&d], 0.5, 0.5);
        assert!(!r.detected);
        assert_eq!(r.best_iou, 0.0);
    }

    #[test]
    fn below_threshold_reports_iou_without_index() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let d = det("a", [0.0, 0.0, 10.0, 3.0], 0.9);
        let r = hit_test(&g, &[&d], 0.5, 0.0);
        assert!(!r.detected);
        assert!(r.best_iou > 0.29);
        assert_eq!(r.matched_detection_index, None);
    }

    #[test]
    fn greedy_duplicate_is_fp() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let d_lo = det("a", [0.0, 0.0, 10.0, 9.0], 0.6);
        let d_hi = det("a", [0.0, 0.0, 10.0, 8.0], 0.9);
        let flags = greedy_ap_match(&[&d_lo, &d_hi], &[&g], 0.5);
        assert_eq!(flags.order, vec![1, 0]);
        assert_eq!(flags.true_positive, vec![true, false]);
        assert_eq!(flags.n_gt, 1);
    }

    #[test]
    fn greedy_low_iou_is_fp() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let d = det("a", [0.0, 0.0, 10.0, 2.0], 0.9);
        assert_eq!(greedy_ap_match(&[&d], &[&g], 0.5).true_positive, vec![false]);
    }

    #[test]
    fn greedy_no_detections() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let flags = greedy_ap_match(&[], &[&g, &g], 0.5);
        assert!(flags.true_positive.is_empty());
        assert_eq!(flags.n_gt, 2);
    }

    #[test]
    fn greedy_respects_image() {
        let g = gt("a", [0.0, 0.0, 10.0, 10.0]);
        let d = det("b", [0.0, 0.0, 10.0, 10.0], 0.9);
        assert_eq!(greedy_ap_match(&[&d], &[&g], 0.5).true_positive, vec![false]);
    }
}
