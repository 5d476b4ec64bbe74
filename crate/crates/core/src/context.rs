//! Context-manipulation experiments.
//!
//! Three ways of taking an image apart around one ground-truth part, each
//! parameterized by a context size `c` in pixels:
//!
//! * hide background: only the part box grown by `c` stays visible;
//! * hide foreground: the part box shrunk by `c` is filled, the rest stays;
//! * location shift: the part box grown by `c` is moved to the mirrored
//!   position and everything else is filled.
//!
//! Detectors are run on the manipulated images elsewhere; this module builds
//! the plans, applies them to rasters and scores the detector output.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{expand, mirror_about_center, shrink, BBox, ImageExtent};
use crate::matching::hit_test;
use crate::model::{Dataset, Detection, PartAnnotation, Presence};
use crate::raster::{Raster, Rgb};

/// Context sizes swept by default.
pub const CONTEXT_GRID: [u32; 11] = [0, 5, 10, 25, 50, 100, 150, 200, 250, 300, 350];

pub const DEFAULT_FILL: Rgb = [114, 114, 114];

pub const DEFAULT_IOU: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    HideBg,
    HideFg,
    LocationShift,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 3] =
        [ExperimentKind::HideBg, ExperimentKind::HideFg, ExperimentKind::LocationShift];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::HideBg => "hide_bg",
            ExperimentKind::HideFg => "hide_fg",
            ExperimentKind::LocationShift => "location_shift",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextError {
    ExtentMismatch { plan: ImageExtent, image: ImageExtent },
    MissingRun(u32),
    EmptyRun(u32),
    BadGrid,
    MixedKinds,
}

impl fmt::Display for ContextError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextError::ExtentMismatch { plan, image } => write!(
                f,
                "plan is for a {}x{} image, got {}x{}",
                plan.width, plan.height, image.width, image.height
            ),
            ContextError::MissingRun(c) => write!(f, "no detections supplied for context size {c}"),
            ContextError::EmptyRun(c) => write!(f, "no plans for context size {c}"),
            ContextError::BadGrid => f.write_str("context grid must be non-empty and strictly increasing"),
            ContextError::MixedKinds => f.write_str("plans mix different experiment kinds"),
        }
    }
}

impl core::error::Error for ContextError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub source: BBox,
    pub destination: BBox,
}

impl Shift {
    /// Whole-pixel displacement used when moving raster content.
    pub fn pixel_offset(&self) -> (i64, i64) {
        (
            libm::round(self.destination.x_min - self.source.x_min) as i64,
            libm::round(self.destination.y_min - self.source.y_min) as i64,
        )
    }
}

/// One manipulation of one image around one part.
///
/// A pixel keeps its content when it lies in some `visible` box and in no
/// `hidden` box; every other pixel gets `fill`. For location shifts the
/// visible destination is populated from `shift.source`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub image_id: String,
    pub part_class: String,
    pub kind: ExperimentKind,
    pub context: u32,
    pub extent: ImageExtent,
    pub fill: Rgb,
    pub visible: Vec<BBox>,
    pub hidden: Vec<BBox>,
    pub shift: Option<Shift>,
    /// Box a detector should find in the manipulated image.
    pub target: BBox,
}

impl MaskPlan {
    /// Identifier of the manipulated image, safe to use as a file stem.
    pub fn sample_id(&self) -> String {
        let mut s = String::with_capacity(self.image_id.len() + self.part_class.len() + 2);
        for ch in self.image_id.chars().chain("__".chars()).chain(self.part_class.chars()) {
            s.push(if ch.is_ascii_alphanumeric() || matches!(ch, '-' | '_' | '.') { ch } else { '_' });
        }
        s
    }

    pub fn visible_area(&self) -> f64 {
        self.visible.iter().map(BBox::area).sum()
    }

    pub fn hidden_area(&self) -> f64 {
        self.hidden.iter().map(BBox::area).sum()
    }
}

fn base_plan(gt: &PartAnnotation, kind: ExperimentKind, c: u32, extent: ImageExtent, fill: Rgb) -> MaskPlan {
    MaskPlan {
        image_id: gt.image_id.clone(),
        part_class: gt.part_class.clone(),
        kind,
        context: c,
        extent,
        fill,
        visible: Vec::new(),
        hidden: Vec::new(),
        shift: None,
        target: gt.bbox,
    }
}

/// Keeps `gt` grown by `c` on each side; fills the rest.
pub fn plan_hide_bg(gt: &PartAnnotation, c: u32, extent: ImageExtent, fill: Rgb) -> MaskPlan {
    let mut p = base_plan(gt, ExperimentKind::HideBg, c, extent, fill);
    p.visible.push(expand(&gt.bbox, c as f64, extent));
    p
}

/// Fills `gt` shrunk by `c` on each side; `c = 0` hides the whole part.
pub fn plan_hide_fg(gt: &PartAnnotation, c: u32, extent: ImageExtent, fill: Rgb) -> MaskPlan {
    let mut p = base_plan(gt, ExperimentKind::HideFg, c, extent, fill);
    p.visible.push(extent.full_box());
    p.hidden.extend(shrink(&gt.bbox.clip(extent), c as f64));
    p
}

/// Moves `gt` grown by `c` to the position mirrored through the image
/// center and fills everything else. The target follows the part.
pub fn plan_location_shift(gt: &PartAnnotation, c: u32, extent: ImageExtent, fill: Rgb) -> MaskPlan {
    let mut p = base_plan(gt, ExperimentKind::LocationShift, c, extent, fill);
    let source = expand(&gt.bbox, c as f64, extent);
    let destination = mirror_about_center(&source, extent);
    let shift = Shift { source, destination };
    let (dx, dy) = shift.pixel_offset();
    p.visible.push(destination);
    p.shift = Some(shift);
    p.target = gt.bbox.translate(dx as f64, dy as f64);
    p
}

pub fn plan(kind: ExperimentKind, gt: &PartAnnotation, c: u32, extent: ImageExtent, fill: Rgb) -> MaskPlan {
    match kind {
        ExperimentKind::HideBg => plan_hide_bg(gt, c, extent, fill),
        ExperimentKind::HideFg => plan_hide_fg(gt, c, extent, fill),
        ExperimentKind::LocationShift => plan_location_shift(gt, c, extent, fill),
    }
}

/// Plans for every present part of every image at every grid size, ordered
/// by context size, then image, then class.
pub fn plans_for_dataset(dataset: &Dataset, kind: ExperimentKind, grid: &[u32], fill: Rgb) -> Vec<MaskPlan> {
    let mut out = Vec::new();
    for &c in grid {
        for i in 0..dataset.images().len() {
            out.extend(plans_for_image(dataset, kind, i, c, fill));
        }
    }
    out
}

pub fn plans_for_image(dataset: &Dataset, kind: ExperimentKind, image: usize, c: u32, fill: Rgb) -> Vec<MaskPlan> {
    let extent = dataset.images()[image].extent();
    (0..dataset.vocabulary().len())
        .filter_map(|k| dataset.annotation_at(image, k))
        .filter(|a| a.presence() == Presence::Present)
        .map(|a| plan(kind, a, c, extent, fill))
        .collect()
}

/// Renders the manipulated image.
pub fn apply_plan(image: &Raster, plan: &MaskPlan) -> Result<Raster, ContextError> {
    if image.extent() != plan.extent {
        return Err(ContextError::ExtentMismatch { plan: plan.extent, image: image.extent() });
    }
    let extent = plan.extent;
    let mut out = Raster::filled(extent, plan.fill);
    match plan.shift {
        Some(shift) => out.copy_shifted(image, &shift.source, shift.pixel_offset()),
        None => {
            for v in &plan.visible {
                out.copy_shifted(image, v, (0, 0));
            }
        }
    }
    for h in &plan.hidden {
        out.fill_box(h, plan.fill);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextPoint {
    pub context: u32,
    pub accuracy: f64,
    pub hits: usize,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRunReport {
    pub kind: ExperimentKind,
    pub iou_threshold: f64,
    pub fill: Rgb,
    pub points: Vec<ContextPoint>,
}

/// Accuracy per context size: the share of planned parts whose target is
/// found at `iou_threshold` in that size's detections. Detections refer to
/// manipulated images through [`MaskPlan::sample_id`].
pub fn evaluate_context_run(
    plans: &[MaskPlan],
    detections: &BTreeMap<u32, Vec<Detection>>,
    grid: &[u32],
    iou_threshold: f64,
) -> Result<ContextRunReport, ContextError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ContextError::BadGrid);
    }
    let kind = plans.first().map(|p| p.kind).ok_or(ContextError::EmptyRun(grid[0]))?;
    if plans.iter().any(|p| p.kind != kind) {
        return Err(ContextError::MixedKinds);
    }
    let fill = plans[0].fill;

    let mut points = Vec::with_capacity(grid.len());
    for &c in grid {
        let dets = detections.get(&c).ok_or(ContextError::MissingRun(c))?;
        let mut by_sample: BTreeMap<(&str, &str), Vec<&Detection>> = BTreeMap::new();
        for d in dets {
            by_sample.entry((d.image_id.as_str(), d.part_class.as_str())).or_default().push(d);
        }
        let mut hits = 0;
        let mut evaluated = 0;
        for p in plans.iter().filter(|p| p.context == c) {
            let sid = p.sample_id();
            let target = PartAnnotation {
                image_id: sid.clone(),
                part_class: p.part_class.clone(),
                bbox: p.target,
                state: crate::model::PartState::Intact,
            };
            let cands = by_sample.get(&(sid.as_str(), p.part_class.as_str())).map_or(&[][..], Vec::as_slice);
            evaluated += 1;
            if hit_test(&target, cands, iou_threshold, 0.0).detected {
                hits += 1;
            }
        }
        if evaluated == 0 {
            return Err(ContextError::EmptyRun(c));
        }
        points.push(ContextPoint { context: c, accuracy: hits as f64 / evaluated as f64, hits, evaluated });
    }
    Ok(ContextRunReport { kind, iou_threshold, fill, points })
}

/// A perfect detector for manipulated images: the target box of every plan.
pub fn oracle_for_plans(plans: &[MaskPlan]) -> Vec<Detection> {
    plans
        .iter()
        .map(|p| Detection { image_id: p.sample_id(), part_class: p.part_class.clone(), bbox: p.target, score: 1.0 })
        .collect()
}

/// A location-prior detector for manipulated images: fires at the class's
/// original mean box regardless of what the image shows.
pub fn prior_for_plans(plans: &[MaskPlan], dataset: &Dataset, means: &[Option<BBox>]) -> Vec<Detection> {
    plans
        .iter()
        .filter_map(|p| {
            let mean = (*means.get(dataset.class_index(&p.part_class)?)?)?;
            Some(Detection {
                image_id: p.sample_id(),
                part_class: p.part_class.clone(),
                bbox: mean.clip(p.extent),
                score: 1.0,
            })
        })
        .collect()
}
