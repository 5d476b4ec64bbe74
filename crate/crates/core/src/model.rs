//! Domain types: part annotations with presence states, detections,
//! datasets and evaluation settings, with validation on construction.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, ImageExtent};
use crate::metrics::Interpolation;

/// Ground-truth state of one part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartState {
    Intact,
    Damaged,
    Absent,
    Occluded,
}

impl PartState {
    pub const ALL: [PartState; 4] = [
        PartState::Intact,
        PartState::Damaged,
        PartState::Absent,
        PartState::Occluded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PartState::Intact => "intact",
            PartState::Damaged => "damaged",
            PartState::Absent => "absent",
            PartState::Occluded => "occluded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }

    pub fn presence(self) -> Presence {
        group_state(self)
    }
}

impl fmt::Display for PartState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The two groups a verifier has to tell apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Present,
    Missing,
}

impl Presence {
    pub fn as_str(self) -> &'static str {
        match self {
            Presence::Present => "present",
            Presence::Missing => "missing",
        }
    }
}

/// Intact and damaged parts are present; absent and occluded parts are missing.
pub fn group_state(state: PartState) -> Presence {
    match state {
        PartState::Intact | PartState::Damaged => Presence::Present,
        PartState::Absent | PartState::Occluded => Presence::Missing,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartAnnotation {
    pub image_id: String,
    pub part_class: String,
    pub bbox: BBox,
    pub state: PartState,
}

impl PartAnnotation {
    pub fn presence(&self) -> Presence {
        group_state(self.state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub part_class: String,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub file_name: Option<String>,
}

impl ImageInfo {
    pub fn extent(&self) -> ImageExtent {
        ImageExtent { width: self.width, height: self.height }
    }
}

/// Validation failures. Record indices are positions in the input list.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    InvalidImage { image_id: String },
    DuplicateImage { image_id: String },
    DuplicateClass { class: String },
    UnknownImage { record: usize, image_id: String },
    UnknownClass { record: usize, class: String },
    UnknownState { record: usize, value: String },
    DuplicateAnnotation { record: usize, image_id: String, class: String },
    InvalidBox { record: usize, bbox: [f64; 4] },
    BoxOutOfBounds { record: usize, bbox: [f64; 4] },
    ScoreOutOfRange { record: usize, score: f64 },
    InvalidConfig(&'static str),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidImage { image_id } => {
                write!(f, "image {image_id:?} has a zero width or height")
            }
            ModelError::DuplicateImage { image_id } => write!(f, "duplicate image id {image_id:?}"),
            ModelError::DuplicateClass { class } => write!(f, "duplicate part class {class:?}"),
            ModelError::UnknownImage { record, image_id } => {
                write!(f, "record {record}: unknown image id {image_id:?}")
            }
            ModelError::UnknownClass { record, class } => {
                write!(f, "record {record}: part class {class:?} is not in the vocabulary")
            }
            ModelError::UnknownState { record, value } => write!(
                f,
                "record {record}: state {value:?} is not one of intact, damaged, absent, occluded"
            ),
            ModelError::DuplicateAnnotation { record, image_id, class } => write!(
                f,
                "record {record}: second annotation for ({image_id:?}, {class:?})"
            ),
            ModelError::InvalidBox { record, bbox } => {
                write!(f, "record {record}: malformed box {bbox:?}")
            }
            ModelError::BoxOutOfBounds { record, bbox } => {
                write!(f, "record {record}: box {bbox:?} lies outside its image")
            }
            ModelError::ScoreOutOfRange { record, score } => {
                write!(f, "record {record}: score {score} outside [0, 1]")
            }
            ModelError::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
        }
    }
}

impl core::error::Error for ModelError {}

/// A validated set of images, part vocabulary and annotations.
///
/// Holds at most one annotation per (image, class). Annotation boxes are
/// clipped to their image on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageInfo>,
    vocabulary: Vec<String>,
    annotations: Vec<PartAnnotation>,
    image_index: BTreeMap<String, usize>,
    class_index: BTreeMap<String, usize>,
    // n_images * n_classes cells holding an annotation index
    cells: Vec<Option<usize>>,
}

impl Dataset {
    pub fn new(
        images: Vec<ImageInfo>,
        vocabulary: Vec<String>,
        mut annotations: Vec<PartAnnotation>,
    ) -> Result<Self, ModelError> {
        let mut image_index = BTreeMap::new();
        for (i, img) in images.iter().enumerate() {
            if img.width == 0 || img.height == 0 {
                return Err(ModelError::InvalidImage { image_id: img.id.clone() });
            }
            if image_index.insert(img.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateImage { image_id: img.id.clone() });
            }
        }
        let mut class_index = BTreeMap::new();
        for (i, c) in vocabulary.iter().enumerate() {
            if class_index.insert(c.clone(), i).is_some() {
                return Err(ModelError::DuplicateClass { class: c.clone() });
            }
        }

        let n_classes = vocabulary.len();
        let mut cells = alloc::vec![None; images.len() * n_classes];
        for (record, ann) in annotations.iter_mut().enumerate() {
            let img = *image_index.get(&ann.image_id).ok_or_else(|| ModelError::UnknownImage {
                record,
                image_id: ann.image_id.clone(),
            })?;
            let cls = *class_index.get(&ann.part_class).ok_or_else(|| ModelError::UnknownClass {
                record,
                class: ann.part_class.clone(),
            })?;
            ann.bbox = check_annotation_box(record, ann.bbox, images[img].extent())?;
            let cell = &mut cells[img * n_classes + cls];
            if cell.is_some() {
                return Err(ModelError::DuplicateAnnotation {
                    record,
                    image_id: ann.image_id.clone(),
                    class: ann.part_class.clone(),
                });
            }
            *cell = Some(record);
        }

        Ok(Self { images, vocabulary, annotations, image_index, class_index, cells })
    }

    pub fn images(&self) -> &[ImageInfo] {
        &self.images
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn annotations(&self) -> &[PartAnnotation] {
        &self.annotations
    }

    pub fn image_index(&self, image_id: &str) -> Option<usize> {
        self.image_index.get(image_id).copied()
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.class_index.get(class).copied()
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageInfo> {
        self.image_index(image_id).map(|i| &self.images[i])
    }

    /// The annotation for (image, class) by index, if any.
    pub fn annotation_at(&self, image: usize, class: usize) -> Option<&PartAnnotation> {
        self.cells
            .get(image * self.vocabulary.len() + class)
            .copied()
            .flatten()
            .map(|i| &self.annotations[i])
    }

    pub fn count(&self, group: Presence) -> usize {
        self.annotations.iter().filter(|a| a.presence() == group).count()
    }

    /// Checks detections against this dataset, keeping input order.
    pub fn validate_detections(&self, dets: Vec<Detection>) -> Result<Vec<Detection>, ModelError> {
        for (record, d) in dets.iter().enumerate() {
            if self.image_index(&d.image_id).is_none() {
                return Err(ModelError::UnknownImage { record, image_id: d.image_id.clone() });
            }
            if self.class_index(&d.part_class).is_none() {
                return Err(ModelError::UnknownClass { record, class: d.part_class.clone() });
            }
            if !d.bbox.is_valid() {
                return Err(ModelError::InvalidBox { record, bbox: d.bbox.to_array() });
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(ModelError::ScoreOutOfRange { record, score: d.score });
            }
        }
        Ok(dets)
    }
}

fn check_annotation_box(record: usize, b: BBox, extent: ImageExtent) -> Result<BBox, ModelError> {
    if !b.is_valid() {
        return Err(ModelError::InvalidBox { record, bbox: b.to_array() });
    }
    let (w, h) = (extent.width as f64, extent.height as f64);
    if b.x_min > w || b.y_min > h || b.x_max < 0.0 || b.y_max < 0.0 {
        return Err(ModelError::BoxOutOfBounds { record, bbox: b.to_array() });
    }
    Ok(b.clip(extent))
}

/// Thresholds and weights for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// IoU threshold for present parts.
    pub t_present: f64,
    /// IoU threshold for missing parts.
    pub t_missing: f64,
    pub beta: f64,
    pub score_threshold: f64,
    pub ap_iou_grid: Vec<f64>,
    pub interpolation: Interpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            t_present: 0.5,
            t_missing: 0.1,
            beta: 0.1,
            score_threshold: 0.0,
            ap_iou_grid: coco_iou_grid(),
            interpolation: Interpolation::Coco101,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.t_present) || !unit(self.t_missing) {
            return Err(ModelError::InvalidConfig("IoU thresholds must lie in [0, 1]"));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(ModelError::InvalidConfig("beta must be finite and non-negative"));
        }
        if !unit(self.score_threshold) {
            return Err(ModelError::InvalidConfig("score threshold must lie in [0, 1]"));
        }
        if self.ap_iou_grid.is_empty() || !self.ap_iou_grid.iter().copied().all(unit) {
            return Err(ModelError::InvalidConfig("AP IoU grid must be non-empty and within [0, 1]"));
        }
        if self.ap_iou_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidConfig("AP IoU grid must be strictly increasing"));
        }
        Ok(())
    }
}

/// 0.50, 0.55, ..., 0.95.
pub fn coco_iou_grid() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}
