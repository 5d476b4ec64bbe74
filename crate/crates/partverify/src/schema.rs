//! Annotation and detection file formats.
//!
//! Annotation file:
//!
//! ```json
//! {
//!   "images": [{"id": "img1", "width": 640, "height": 480, "file_name": "img1.png"}],
//!   "parts": ["saddle", "bell"],
//!   "annotations": [{"image_id": "img1", "part": "saddle", "bbox": [10, 20, 50, 40], "state": "intact"}]
//! }
//! ```
//!
//! Detection file: a list of `{"image_id", "part", "bbox", "score"}`.
//! Boxes are `[x_min, y_min, x_max, y_max]` unless read with
//! [`BoxFormat::Xywh`]. Unknown keys are ignored with a warning.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use partverify_core::geometry::BBox;
use partverify_core::model::{Dataset, Detection, ImageInfo, ModelError, PartAnnotation, PartState};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed document: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: ModelError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoxFormat {
    /// `[x_min, y_min, x_max, y_max]`
    #[default]
    Xyxy,
    /// `[x, y, width, height]`
    Xywh,
}

impl BoxFormat {
    fn to_box(self, b: [f64; 4]) -> BBox {
        match self {
            BoxFormat::Xyxy => BBox::new(b[0], b[1], b[2], b[3]),
            BoxFormat::Xywh => BBox::from_xywh(b[0], b[1], b[2], b[3]),
        }
    }
}

/// Image ids may be written as strings or integers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Id {
    Text(String),
    Number(i64),
}

impl From<Id> for String {
    fn from(id: Id) -> String {
        match id {
            Id::Text(s) => s,
            Id::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawImage {
    id: Id,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file_name: Option<String>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    image_id: Id,
    part: String,
    bbox: [f64; 4],
    state: String,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotationFile {
    images: Vec<RawImage>,
    parts: Vec<String>,
    annotations: Vec<RawAnnotation>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDetection {
    image_id: Id,
    part: String,
    bbox: [f64; 4],
    score: f64,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

fn warn_unknown(extra: &BTreeMap<String, Value>, what: &str) {
    for key in extra.keys() {
        log::warn!("ignoring unknown key {key:?} in {what}");
    }
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_owned(), source })
}

/// Parses and validates an annotation document.
pub fn parse_dataset(text: &str, format: BoxFormat) -> Result<Dataset, DocError> {
    let raw: RawAnnotationFile = serde_json::from_str(text)?;
    warn_unknown(&raw.extra, "annotation file");
    let images = raw
        .images
        .into_iter()
        .map(|im| {
            warn_unknown(&im.extra, "image record");
            ImageInfo { id: im.id.into(), width: im.width, height: im.height, file_name: im.file_name }
        })
        .collect();
    let annotations = raw
        .annotations
        .into_iter()
        .enumerate()
        .map(|(record, a)| {
            warn_unknown(&a.extra, "annotation record");
            let state = PartState::parse(&a.state)
                .ok_or_else(|| ModelError::UnknownState { record, value: a.state.clone() })?;
            Ok(PartAnnotation { image_id: a.image_id.into(), part_class: a.part, bbox: format.to_box(a.bbox), state })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(Dataset::new(images, raw.parts, annotations)?)
}

/// Parses detections without checking them against a dataset.
pub fn parse_detections(text: &str, format: BoxFormat) -> Result<Vec<Detection>, serde_json::Error> {
    let raw: Vec<RawDetection> = serde_json::from_str(text)?;
    Ok(raw
        .into_iter()
        .map(|d| {
            warn_unknown(&d.extra, "detection record");
            Detection { image_id: d.image_id.into(), part_class: d.part, bbox: format.to_box(d.bbox), score: d.score }
        })
        .collect())
}

#[derive(Debug, thiserror::Error)]
pub enum DocError {
    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

impl DocError {
    fn at(self, path: &Path) -> LoadError {
        let path = path.to_owned();
        match self {
            DocError::Parse(source) => LoadError::Parse { path, source },
            DocError::Invalid(source) => LoadError::Invalid { path, source },
        }
    }
}

pub fn load_dataset(path: &Path, format: BoxFormat) -> Result<Dataset, LoadError> {
    parse_dataset(&read(path)?, format).map_err(|e| e.at(path))
}

/// Loads detections and checks them against `dataset`; input order is kept.
pub fn load_detections(path: &Path, dataset: &Dataset, format: BoxFormat) -> Result<Vec<Detection>, LoadError> {
    let dets = load_detections_unchecked(path, format)?;
    dataset
        .validate_detections(dets)
        .map_err(|source| LoadError::Invalid { path: path.to_owned(), source })
}

pub fn load_detections_unchecked(path: &Path, format: BoxFormat) -> Result<Vec<Detection>, LoadError> {
    parse_detections(&read(path)?, format).map_err(|source| LoadError::Parse { path: path.to_owned(), source })
}

/// Annotation document for `dataset`, corner-form boxes.
pub fn dataset_to_json(dataset: &Dataset) -> String {
    let doc = RawAnnotationFile {
        images: dataset
            .images()
            .iter()
            .map(|im| RawImage {
                id: Id::Text(im.id.clone()),
                width: im.width,
                height: im.height,
                file_name: im.file_name.clone(),
                extra: BTreeMap::new(),
            })
            .collect(),
        parts: dataset.vocabulary().to_vec(),
        annotations: dataset
            .annotations()
            .iter()
            .map(|a| RawAnnotation {
                image_id: Id::Text(a.image_id.clone()),
                part: a.part_class.clone(),
                bbox: a.bbox.to_array(),
                state: a.state.as_str().to_string(),
                extra: BTreeMap::new(),
            })
            .collect(),
        extra: BTreeMap::new(),
    };
    to_pretty(&doc)
}

pub fn detections_to_json(dets: &[Detection]) -> String {
    let raw: Vec<RawDetection> = dets
        .iter()
        .map(|d| RawDetection {
            image_id: Id::Text(d.image_id.clone()),
            part: d.part_class.clone(),
            bbox: d.bbox.to_array(),
            score: d.score,
            extra: BTreeMap::new(),
        })
        .collect();
    to_pretty(&raw)
}

pub(crate) fn to_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory serialization");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": "img1", "width": 100, "height": 80}],
        "parts": ["saddle"],
        "annotations": [{"image_id": "img1", "part": "saddle", "bbox": [1, 2, 30, 40], "state": "intact"}]
    }"#;

    #[test]
    fn minimal_document() {
        let ds = parse_dataset(MINIMAL, BoxFormat::Xyxy).unwrap();
        assert_eq!(ds.annotations().len(), 1);
        assert_eq!(ds.annotations()[0].bbox, BBox::new(1.0, 2.0, 30.0, 40.0));
    }

    #[test]
    fn xywh_is_converted() {
        let ds = parse_dataset(MINIMAL, BoxFormat::Xywh).unwrap();
        assert_eq!(ds.annotations()[0].bbox, BBox::new(1.0, 2.0, 31.0, 42.0).clip(ds.images()[0].extent()));
    }

    #[test]
    fn unknown_state_names_record() {
        let doc = MINIMAL.replace("intact", "broken");
        match parse_dataset(&doc, BoxFormat::Xyxy) {
            Err(DocError::Invalid(ModelError::UnknownState { record: 0, value })) => assert_eq!(value, "broken"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_pair_rejected() {
        let doc = r#"{
            "images": [{"id": "img1", "width": 100, "height": 80}],
            "parts": ["saddle"],
            "annotations": [
                {"image_id": "img1", "part": "saddle", "bbox": [1, 2, 30, 40], "state": "intact"},
                {"image_id": "img1", "part": "saddle", "bbox": [1, 2, 30, 40], "state": "absent"}
            ]
        }"#;
        assert!(matches!(
            parse_dataset(doc, BoxFormat::Xyxy),
            Err(DocError::Invalid(ModelError::DuplicateAnnotation { record: 1, .. }))
        ));
    }

    #[test]
    fn malformed_is_parse_error() {
        assert!(matches!(parse_dataset("{\"images\": 3}", BoxFormat::Xyxy), Err(DocError::Parse(_))));
        assert!(parse_detections("[{\"image_id\": \"a\"}]", BoxFormat::Xyxy).is_err());
    }

    #[test]
    fn unknown_keys_tolerated_and_numeric_ids() {
        let doc = r#"{
            "info": {"year": 2021},
            "images": [{"id": 7, "width": 10, "height": 10, "license": 1}],
            "parts": ["bell"],
            "annotations": [{"image_id": 7, "part": "bell", "bbox": [0, 0, 1, 1], "state": "absent", "area": 1}]
        }"#;
        let ds = parse_dataset(doc, BoxFormat::Xyxy).unwrap();
        assert_eq!(ds.images()[0].id, "7");
    }

    #[test]
    fn empty_detection_list() {
        assert!(parse_detections("[]", BoxFormat::Xyxy).unwrap().is_empty());
    }

    #[test]
    fn serialized_dataset_parses_back_equal() {
        let ds = parse_dataset(MINIMAL, BoxFormat::Xyxy).unwrap();
        assert_eq!(parse_dataset(&dataset_to_json(&ds), BoxFormat::Xyxy).unwrap(), ds);
    }
}
