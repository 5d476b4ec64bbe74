//! Verification metrics, AP, recall curves and dataset statistics.
//!
//! Present recall `R^P` is the share of present parts hit at `T^P`;
//! missing recall `R^M` is the share of missing parts that still get a
//! detection at `T^M`, i.e. hallucinations. `F_vv` folds the two into one
//! score with `beta` weighting hallucinations:
//!
//! ```text
//! F_vv = (1 + b^2) * R^P * (1 - R^M) / (b^2 * (1 - R^M) + R^P)
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::matching::{greedy_ap_match, hit_test, DetectionIndex, MatchResult};
use crate::model::{Dataset, Detection, EvalConfig, ModelError, PartAnnotation, PartState, Presence};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    /// An input fell outside its mathematical domain.
    Domain(&'static str),
    /// The dataset has no parts in the requested presence group.
    EmptyGroup(Presence),
    EmptyDataset,
    UnknownClass(String),
    Config(ModelError),
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::Domain(what) => write!(f, "domain error: {what}"),
            MetricError::EmptyGroup(g) => {
                write!(f, "dataset has no {} parts; recall is undefined", g.as_str())
            }
            MetricError::EmptyDataset => f.write_str("dataset has no annotations"),
            MetricError::UnknownClass(c) => write!(f, "part class {c:?} is not in the vocabulary"),
            MetricError::Config(e) => fmt::Display::fmt(e, f),
        }
    }
}

impl core::error::Error for MetricError {}

impl From<ModelError> for MetricError {
    fn from(e: ModelError) -> Self {
        MetricError::Config(e)
    }
}

/// `F_vv` from present recall, missing recall and `beta`.
///
/// Defined as 0 when the denominator vanishes (`R^P = 0`, `R^M = 1`).
pub fn compute_fvv(r_present: f64, r_missing: f64, beta: f64) -> Result<f64, MetricError> {
    let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
    if !unit(r_present) || !unit(r_missing) {
        return Err(MetricError::Domain("recalls must be finite and within [0, 1]"));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(MetricError::Domain("beta must be finite and non-negative"));
    }
    let b2 = beta * beta;
    let keep = 1.0 - r_missing;
    let denom = b2 * keep + r_present;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(((1.0 + b2) * r_present * keep / denom).clamp(0.0, 1.0))
}

/// Looks up the detections relevant to each ground-truth part.
pub struct PartScorer<'a> {
    dataset: &'a Dataset,
    dets: &'a [Detection],
    index: DetectionIndex,
}

impl<'a> PartScorer<'a> {
    pub fn new(dataset: &'a Dataset, dets: &'a [Detection]) -> Self {
        Self { dataset, dets, index: DetectionIndex::build(dataset, dets) }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn index(&self) -> &DetectionIndex {
        &self.index
    }

    /// Candidate detections for annotation `ann` (same image and class).
    pub fn candidates(&self, ann: &PartAnnotation) -> Vec<&'a Detection> {
        match (self.dataset.image_index(&ann.image_id), self.dataset.class_index(&ann.part_class)) {
            (Some(i), Some(c)) => self.index.cell(i, c).iter().map(|&k| &self.dets[k]).collect(),
            _ => Vec::new(),
        }
    }

    pub fn hit(&self, ann: usize, t: f64, score_threshold: f64) -> MatchResult {
        let a = &self.dataset.annotations()[ann];
        hit_test(a, &self.candidates(a), t, score_threshold)
    }

    /// Best IoU over surviving detections, `None` when none survive. A part
    /// is detected at `t` exactly when this is `Some(v)` with `v >= t`.
    pub fn best_iou(&self, ann: usize, score_threshold: f64) -> Option<f64> {
        let a = &self.dataset.annotations()[ann];
        let cands = self.candidates(a);
        let r = hit_test(a, &cands, 0.0, score_threshold);
        r.detected.then_some(r.best_iou)
    }
}

/// Annotation indices of one presence group, in dataset order.
pub fn group_members(dataset: &Dataset, group: Presence) -> Vec<usize> {
    dataset
        .annotations()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.presence() == group)
        .map(|(i, _)| i)
        .collect()
}

/// Per-part best overlaps for one presence group; thresholding these gives
/// recall at any IoU.
#[derive(Debug, Clone, PartialEq)]
pub struct BestOverlaps {
    pub group: Presence,
    pub score_threshold: f64,
    /// (annotation index, best IoU if any detection survived)
    pub entries: Vec<(usize, Option<f64>)>,
}

impl BestOverlaps {
    pub fn compute(scorer: &PartScorer<'_>, group: Presence, score_threshold: f64) -> Self {
        let entries = group_members(scorer.dataset(), group)
            .into_iter()
            .map(|i| (i, scorer.best_iou(i, score_threshold)))
            .collect();
        Self { group, score_threshold, entries }
    }

    pub fn recall_at(&self, dataset: &Dataset, t: f64) -> Result<RecallOutcome, MetricError> {
        if self.entries.is_empty() {
            return Err(MetricError::EmptyGroup(self.group));
        }
        let n_classes = dataset.vocabulary().len();
        let mut hits = alloc::vec![0usize; n_classes];
        let mut support = alloc::vec![0usize; n_classes];
        for &(ann, best) in &self.entries {
            let a = &dataset.annotations()[ann];
            let c = dataset.class_index(&a.part_class).expect("validated dataset");
            support[c] += 1;
            if best.is_some_and(|v| v >= t) {
                hits[c] += 1;
            }
        }
        let total_hits: usize = hits.iter().sum();
        let per_class = dataset
            .vocabulary()
            .iter()
            .enumerate()
            .map(|(c, name)| ClassRecall {
                class: name.clone(),
                hits: hits[c],
                support: support[c],
                recall: ratio(hits[c], support[c]),
            })
            .collect();
        Ok(RecallOutcome {
            group: self.group,
            threshold: t,
            score_threshold: self.score_threshold,
            hits: total_hits,
            total: self.entries.len(),
            recall: total_hits as f64 / self.entries.len() as f64,
            per_class,
        })
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    pub class: String,
    pub hits: usize,
    pub support: usize,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallOutcome {
    pub group: Presence,
    pub threshold: f64,
    pub score_threshold: f64,
    pub hits: usize,
    pub total: usize,
    pub recall: f64,
    pub per_class: Vec<ClassRecall>,
}

/// Fraction of parts in `group` detected at IoU `t`.
pub fn recall(
    dataset: &Dataset,
    dets: &[Detection],
    group: Presence,
    t: f64,
    score_threshold: f64,
) -> Result<RecallOutcome, MetricError> {
    let scorer = PartScorer::new(dataset, dets);
    BestOverlaps::compute(&scorer, group, score_threshold).recall_at(dataset, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVerification {
    pub class: String,
    pub present_hits: usize,
    pub present_support: usize,
    pub r_present: Option<f64>,
    pub missing_hits: usize,
    pub missing_support: usize,
    pub r_missing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub r_present: f64,
    pub r_missing: f64,
    pub f_vv: f64,
    pub present_hits: usize,
    pub present_total: usize,
    pub missing_hits: usize,
    pub missing_total: usize,
    pub per_class: Vec<ClassVerification>,
    pub config: EvalConfig,
}

impl VerificationReport {
    /// Combines the two group recalls into a report.
    pub fn assemble(
        present: &RecallOutcome,
        missing: &RecallOutcome,
        config: &EvalConfig,
    ) -> Result<Self, MetricError> {
        let f_vv = compute_fvv(present.recall, missing.recall, config.beta)?;
        let per_class = present
            .per_class
            .iter()
            .zip(&missing.per_class)
            .map(|(p, m)| ClassVerification {
                class: p.class.clone(),
                present_hits: p.hits,
                present_support: p.support,
                r_present: p.recall,
                missing_hits: m.hits,
                missing_support: m.support,
                r_missing: m.recall,
            })
            .collect();
        Ok(Self {
            r_present: present.recall,
            r_missing: missing.recall,
            f_vv,
            present_hits: present.hits,
            present_total: present.total,
            missing_hits: missing.hits,
            missing_total: missing.total,
            per_class,
            config: config.clone(),
        })
    }
}

/// `R^P` at `T^P`, `R^M` at `T^M`, and `F_vv`.
pub fn verify(
    dataset: &Dataset,
    dets: &[Detection],
    config: &EvalConfig,
) -> Result<VerificationReport, MetricError> {
    config.validate()?;
    let scorer = PartScorer::new(dataset, dets);
    let present = BestOverlaps::compute(&scorer, Presence::Present, config.score_threshold)
        .recall_at(dataset, config.t_present)?;
    let missing = BestOverlaps::compute(&scorer, Presence::Missing, config.score_threshold)
        .recall_at(dataset, config.t_missing)?;
    VerificationReport::assemble(&present, &missing, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub group: Presence,
    pub score_threshold: f64,
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
}

impl RecallCurve {
    pub fn from_overlaps(
        dataset: &Dataset,
        overlaps: &BestOverlaps,
        thresholds: &[f64],
    ) -> Result<Self, MetricError> {
        check_thresholds(thresholds)?;
        let recall = thresholds
            .iter()
            .map(|&t| overlaps.recall_at(dataset, t).map(|r| r.recall))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            group: overlaps.group,
            score_threshold: overlaps.score_threshold,
            thresholds: thresholds.to_vec(),
            recall,
        })
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<(), MetricError> {
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(MetricError::Domain("curve thresholds must lie in [0, 1]"));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricError::Domain("curve thresholds must be strictly increasing"));
    }
    Ok(())
}

/// Recall of `group` at each IoU threshold.
pub fn recall_curve(
    dataset: &Dataset,
    dets: &[Detection],
    group: Presence,
    thresholds: &[f64],
    score_threshold: f64,
) -> Result<RecallCurve, MetricError> {
    let scorer = PartScorer::new(dataset, dets);
    let overlaps = BestOverlaps::compute(&scorer, group, score_threshold);
    RecallCurve::from_overlaps(dataset, &overlaps, thresholds)
}

/// `0.00, step, ..., 1.00` built from integer hundredths so grid points are exact.
pub fn hundredths_grid(start: u32, step: u32, end: u32) -> Vec<f64> {
    (start..=end).step_by(step.max(1) as usize).map(|v| v as f64 / 100.0).collect()
}

/// Precision interpolation used for AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Recall samples 0.00, 0.01, ..., 1.00.
    Coco101,
    /// Recall samples 0.0, 0.1, ..., 1.0.
    Voc11,
}

impl Interpolation {
    fn divisions(self) -> usize {
        match self {
            Interpolation::Coco101 => 100,
            Interpolation::Voc11 => 10,
        }
    }
}

/// Interpolated AP from TP/FP flags in processing order.
///
/// The precision at recall sample `r` is the best precision reached at any
/// recall `>= r`; samples with no such point contribute 0. Recall
/// comparisons are done in integers so sample boundaries are exact.
pub fn interpolated_ap(true_positive: &[bool], n_gt: usize, interpolation: Interpolation) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp_cum = Vec::with_capacity(true_positive.len());
    let mut precision = Vec::with_capacity(true_positive.len());
    let mut tp = 0usize;
    for (i, &flag) in true_positive.iter().enumerate() {
        tp += usize::from(flag);
        tp_cum.push(tp);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // running max from the end
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }

    let div = interpolation.divisions();
    let mut pos = 0usize;
    let mut sum = 0.0;
    for k in 0..=div {
        // first position whose recall tp/n_gt >= k/div
        while pos < tp_cum.len() && tp_cum[pos] * div < k * n_gt {
            pos += 1;
        }
        if pos < precision.len() {
            sum += precision[pos];
        }
    }
    sum / (div + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: String,
    pub n_gt: usize,
    pub n_detections: usize,
    /// AP at each grid threshold; empty when the class has no present parts.
    pub per_threshold: Vec<f64>,
    /// Mean over the grid; `None` when the class has no present parts.
    pub ap: Option<f64>,
}

/// AP of one class averaged over an IoU grid. Only present parts are
/// ground truth; every detection of the class takes part.
pub fn average_precision(
    dataset: &Dataset,
    dets: &[Detection],
    class: &str,
    ap_iou_grid: &[f64],
    interpolation: Interpolation,
) -> Result<ClassAp, MetricError> {
    let c = dataset.class_index(class).ok_or_else(|| MetricError::UnknownClass(class.into()))?;
    let index = DetectionIndex::build(dataset, dets);
    Ok(class_ap(dataset, dets, &index, c, ap_iou_grid, interpolation))
}

/// [`average_precision`] over a prebuilt index.
pub fn class_ap(
    dataset: &Dataset,
    dets: &[Detection],
    index: &DetectionIndex,
    class: usize,
    ap_iou_grid: &[f64],
    interpolation: Interpolation,
) -> ClassAp {
    let name = &dataset.vocabulary()[class];
    let gts: Vec<&PartAnnotation> = (0..dataset.images().len())
        .filter_map(|i| dataset.annotation_at(i, class))
        .filter(|a| a.presence() == Presence::Present)
        .collect();
    let class_dets: Vec<&Detection> = index.class(class).iter().map(|&k| &dets[k]).collect();
    if gts.is_empty() {
        return ClassAp {
            class: name.clone(),
            n_gt: 0,
            n_detections: class_dets.len(),
            per_threshold: Vec::new(),
            ap: None,
        };
    }
    let per_threshold: Vec<f64> = ap_iou_grid
        .iter()
        .map(|&t| {
            let flags = greedy_ap_match(&class_dets, &gts, t);
            interpolated_ap(&flags.true_positive, flags.n_gt, interpolation)
        })
        .collect();
    let ap = per_threshold.iter().sum::<f64>() / per_threshold.len() as f64;
    ClassAp {
        class: name.clone(),
        n_gt: gts.len(),
        n_detections: class_dets.len(),
        per_threshold,
        ap: Some(ap),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap_iou_grid: Vec<f64>,
    pub interpolation: Interpolation,
    pub per_class: Vec<ClassAp>,
    /// Mean over classes with a defined AP.
    pub map: Option<f64>,
    /// Classes left out of the mean for lack of present ground truth.
    pub excluded: Vec<String>,
}

impl ApReport {
    pub fn from_classes(per_class: Vec<ClassAp>, ap_iou_grid: &[f64], interpolation: Interpolation) -> Self {
        let defined: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
        let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let excluded = per_class.iter().filter(|c| c.ap.is_none()).map(|c| c.class.clone()).collect();
        Self {
            ap_iou_grid: ap_iou_grid.to_vec(),
            interpolation,
            per_class,
            map,
            excluded,
        }
    }
}

pub fn mean_average_precision(
    dataset: &Dataset,
    dets: &[Detection],
    ap_iou_grid: &[f64],
    interpolation: Interpolation,
) -> ApReport {
    let index = DetectionIndex::build(dataset, dets);
    let per_class = (0..dataset.vocabulary().len())
        .map(|c| class_ap(dataset, dets, &index, c, ap_iou_grid, interpolation))
        .collect();
    ApReport::from_classes(per_class, ap_iou_grid, interpolation)
}

/// Mean and population standard deviation of box center and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxMoments {
    pub mean_center: (f64, f64),
    pub mean_size: (f64, f64),
    pub std_center: (f64, f64),
    pub std_size: (f64, f64),
}

impl BoxMoments {
    pub fn mean_box(&self) -> BBox {
        BBox::from_center(self.mean_center.0, self.mean_center.1, self.mean_size.0, self.mean_size.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLayout {
    pub class: String,
    pub count: usize,
    pub moments: Option<BoxMoments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateShare {
    pub state: PartState,
    pub count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutStats {
    pub n_images: usize,
    pub n_annotations: usize,
    pub classes: Vec<ClassLayout>,
    pub states: Vec<StateShare>,
}

impl LayoutStats {
    pub fn class(&self, name: &str) -> Option<&ClassLayout> {
        self.classes.iter().find(|c| c.class == name)
    }

    pub fn ratio(&self, state: PartState) -> f64 {
        self.states.iter().find(|s| s.state == state).map_or(0.0, |s| s.ratio)
    }
}

/// Per-class box statistics over all annotations (missing parts carry their
/// expected box too) and the global state distribution.
///
/// Sums run in image-id order so results do not depend on input order.
pub fn layout_stats(dataset: &Dataset) -> Result<LayoutStats, MetricError> {
    if dataset.annotations().is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let mut image_order: Vec<usize> = (0..dataset.images().len()).collect();
    image_order.sort_by(|&a, &b| dataset.images()[a].id.cmp(&dataset.images()[b].id));

    let classes = dataset
        .vocabulary()
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let boxes: Vec<BBox> = image_order
                .iter()
                .filter_map(|&i| dataset.annotation_at(i, c))
                .map(|a| a.bbox)
                .collect();
            ClassLayout { class: name.clone(), count: boxes.len(), moments: moments(&boxes) }
        })
        .collect();

    let n = dataset.annotations().len();
    let states = PartState::ALL
        .iter()
        .map(|&state| {
            let count = dataset.annotations().iter().filter(|a| a.state == state).count();
            StateShare { state, count, ratio: count as f64 / n as f64 }
        })
        .collect();

    Ok(LayoutStats { n_images: dataset.images().len(), n_annotations: n, classes, states })
}

fn moments(boxes: &[BBox]) -> Option<BoxMoments> {
    if boxes.is_empty() {
        return None;
    }
    let n = boxes.len() as f64;
    let cols = |f: &dyn Fn(&BBox) -> f64| {
        let mean = boxes.iter().map(f).sum::<f64>() / n;
        let var = boxes.iter().map(|b| (f(b) - mean) * (f(b) - mean)).sum::<f64>() / n;
        (mean, libm::sqrt(var))
    };
    let (cx, scx) = cols(&|b| b.center().0);
    let (cy, scy) = cols(&|b| b.center().1);
    let (w, sw) = cols(&|b| b.width());
    let (h, sh) = cols(&|b| b.height());
    Some(BoxMoments {
        mean_center: (cx, cy),
        mean_size: (w, h),
        std_center: (scx, scy),
        std_size: (sw, sh),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ImageInfo;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn fvv_table_rows() {
        let v = compute_fvv(0.83, 0.28, 0.1).unwrap();
        assert!((v - 0.72).abs() <= 0.005, "{v}");
        let v = compute_fvv(0.90, 0.62, 0.1).unwrap();
        assert!((v - 0.38).abs() <= 0.005, "{v}");
    }

    #[test]
    fn fvv_edges() {
        assert_eq!(compute_fvv(1.0, 0.0, 0.1).unwrap(), 1.0);
        assert_eq!(compute_fvv(0.7, 1.0, 0.1).unwrap(), 0.0);
        assert_eq!(compute_fvv(0.0, 1.0, 0.1).unwrap(), 0.0);
        assert_eq!(compute_fvv(0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!((compute_fvv(0.3, 0.25, 0.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(compute_fvv(1.1, 0.0, 0.1).is_err());
        assert!(compute_fvv(0.5, f64::NAN, 0.1).is_err());
        assert!(compute_fvv(0.5, 0.5, -0.1).is_err());
        assert!(compute_fvv(0.5, 0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn interpolated_ap_hand_enumeration() {
        // precisions 1, 1/2, 2/3 at recalls .5, .5, 1
        let ap = interpolated_ap(&[true, false, true], 2, Interpolation::Coco101);
        let expected = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((ap - expected).abs() < 1e-12);
        assert!((ap - 0.835).abs() < 1e-3);
    }

    #[test]
    fn interpolated_ap_basics() {
        assert_eq!(interpolated_ap(&[], 3, Interpolation::Coco101), 0.0);
        assert_eq!(interpolated_ap(&[true, true], 2, Interpolation::Coco101), 1.0);
        assert_eq!(interpolated_ap(&[true, true], 2, Interpolation::Voc11), 1.0);
        assert_eq!(interpolated_ap(&[false, false], 2, Interpolation::Coco101), 0.0);
        // one of two found, perfectly precise: 51 of 101 samples
        let ap = interpolated_ap(&[true], 2, Interpolation::Coco101);
        assert!((ap - 51.0 / 101.0).abs() < 1e-15);
        let ap = interpolated_ap(&[true], 2, Interpolation::Voc11);
        assert!((ap - 6.0 / 11.0).abs() < 1e-15);
    }

    fn toy_dataset() -> Dataset {
        let images = (0..2)
            .map(|i| ImageInfo { id: alloc::format!("im{i}"), width: 100, height: 100, file_name: None })
            .collect();
        let ann = |img: &str, class: &str, b: [f64; 4], state| PartAnnotation {
            image_id: img.to_string(),
            part_class: class.to_string(),
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
            state,
        };
        Dataset::new(
            images,
            vec!["a".to_string(), "b".to_string()],
            vec![
                ann("im0", "a", [0.0, 0.0, 10.0, 10.0], PartState::Intact),
                ann("im0", "b", [20.0, 20.0, 40.0, 40.0], PartState::Absent),
                ann("im1", "a", [50.0, 50.0, 60.0, 60.0], PartState::Intact),
                ann("im1", "b", [10.0, 60.0, 30.0, 80.0], PartState::Intact),
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_images_ap() {
        let ds = toy_dataset();
        let d = |img: &str, b: [f64; 4], score| Detection {
            image_id: img.to_string(),
            part_class: "a".to_string(),
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
            score,
        };
        let dets = vec![
            d("im0", [0.0, 0.0, 10.0, 10.0], 0.9),
            d("im0", [70.0, 70.0, 80.0, 80.0], 0.8),
            d("im1", [50.0, 50.0, 60.0, 60.0], 0.7),
        ];
        let ap = average_precision(&ds, &dets, "a", &[0.5], Interpolation::Coco101).unwrap();
        let expected = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((ap.ap.unwrap() - expected).abs() < 1e-12);
        assert_eq!(ap.n_gt, 2);
    }

    #[test]
    fn class_without_present_parts_is_excluded() {
        let images = vec![ImageInfo { id: "x".to_string(), width: 10, height: 10, file_name: None }];
        let ds = Dataset::new(
            images,
            vec!["a".to_string(), "b".to_string()],
            vec![
                PartAnnotation {
                    image_id: "x".to_string(),
                    part_class: "a".to_string(),
                    bbox: BBox::new(0.0, 0.0, 5.0, 5.0),
                    state: PartState::Intact,
                },
                PartAnnotation {
                    image_id: "x".to_string(),
                    part_class: "b".to_string(),
                    bbox: BBox::new(0.0, 0.0, 5.0, 5.0),
                    state: PartState::Occluded,
                },
            ],
        )
        .unwrap();
        let rep = mean_average_precision(&ds, &[], &[0.5], Interpolation::Coco101);
        assert_eq!(rep.excluded, vec!["b".to_string()]);
        assert_eq!(rep.map, Some(0.0));
        assert!(average_precision(&ds, &[], "zzz", &[0.5], Interpolation::Coco101).is_err());
    }

    #[test]
    fn empty_detections_zero_recall() {
        let ds = toy_dataset();
        assert_eq!(recall(&ds, &[], Presence::Present, 0.5, 0.0).unwrap().recall, 0.0);
        assert_eq!(recall(&ds, &[], Presence::Missing, 0.0, 0.0).unwrap().recall, 0.0);
    }

    #[test]
    fn empty_group_is_an_error() {
        let images = vec![ImageInfo { id: "x".to_string(), width: 10, height: 10, file_name: None }];
        let ds = Dataset::new(images, vec!["a".to_string()], vec![]).unwrap();
        assert_eq!(
            recall(&ds, &[], Presence::Missing, 0.1, 0.0).unwrap_err(),
            MetricError::EmptyGroup(Presence::Missing)
        );
        assert_eq!(layout_stats(&ds).unwrap_err(), MetricError::EmptyDataset);
    }

    #[test]
    fn curve_rejects_bad_grid() {
        let ds = toy_dataset();
        assert!(recall_curve(&ds, &[], Presence::Present, &[0.5, 0.2], 0.0).is_err());
        assert!(recall_curve(&ds, &[], Presence::Present, &[0.5, 1.2], 0.0).is_err());
    }

    #[test]
    fn layout_single_and_pair() {
        let ds = toy_dataset();
        let st = layout_stats(&ds).unwrap();
        let a = st.class("a").unwrap().moments.unwrap();
        // centers (5,5) and (55,55)
        assert_eq!(a.mean_center, (30.0, 30.0));
        assert_eq!(a.mean_size, (10.0, 10.0));
        assert_eq!(a.std_size, (0.0, 0.0));
        assert_eq!(a.std_center, (25.0, 25.0));
        assert_eq!(st.ratio(PartState::Intact), 0.75);
        assert_eq!(st.ratio(PartState::Absent), 0.25);
        let total: f64 = st.states.iter().map(|s| s.ratio).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hundredths() {
        let g = hundredths_grid(0, 5, 100);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[20], 1.0);
        assert_eq!(g[10], 0.5);
    }
}
