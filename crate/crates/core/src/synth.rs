//! Synthetic bike-like datasets and reference detectors.
//!
//! Every image draws from its own random substream derived from
//! `(seed, stream tag, image index)`, so images can be produced in any order
//! or in parallel and still come out identical.
//!
//! Random numbers come from PCG-XSL-RR-128/64 (`rand_pcg::Pcg64`: multiplier
//! `0x2360ed051fc65da44385df649fccf645`, increment
//! `0x5851f42d4c957f2d14057b7ef767814f`). Substream seeds are mixed with the
//! SplitMix64 finalizer (`0x9e3779b97f4a7c15`, `0xbf58476d1ce4e5b9`,
//! `0x94d049bb133111eb`) and expanded by `SeedableRng::seed_from_u64`.
//! Normal draws use `rand_distr`'s ziggurat sampler with `libm` math, so
//! output is identical across platforms.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, ImageExtent};
use crate::metrics::layout_stats;
use crate::model::{Dataset, Detection, ImageInfo, PartAnnotation, PartState, Presence};
use crate::raster::{Raster, Rgb};

const STREAM_LAYOUT: u64 = 1;
const STREAM_ORACLE: u64 = 2;
const STREAM_PRIOR: u64 = 3;
const STREAM_NOISY: u64 = 4;

/// Truncation bound, in standard deviations, for layout sampling.
const TRUNCATION: f64 = 2.0;

pub const BACKGROUND: Rgb = [236, 236, 230];

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    InvalidSpec(String),
    InvalidParams(&'static str),
    NoImages,
    TooFewImages { needed: usize, found: usize },
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::InvalidSpec(m) => write!(f, "invalid layout spec: {m}"),
            SynthError::InvalidParams(m) => write!(f, "invalid detector parameters: {m}"),
            SynthError::NoImages => f.write_str("at least one image is required"),
            SynthError::TooFewImages { needed, found } => {
                write!(f, "needs at least {needed} images, dataset has {found}")
            }
        }
    }
}

impl core::error::Error for SynthError {}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, stream, index)`.
pub fn substream(seed: u64, stream: u64, index: u64) -> Pcg64 {
    let mixed = splitmix64(seed ^ splitmix64(stream ^ splitmix64(index)));
    Pcg64::seed_from_u64(mixed)
}

/// Probabilities of the four part states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateProbs {
    pub intact: f64,
    pub damaged: f64,
    pub absent: f64,
    pub occluded: f64,
}

impl StateProbs {
    /// 60.5% intact, 6% damaged, 19.5% absent, 14% occluded.
    pub const BIKE: StateProbs = StateProbs { intact: 0.605, damaged: 0.06, absent: 0.195, occluded: 0.14 };

    pub fn as_array(&self) -> [f64; 4] {
        [self.intact, self.damaged, self.absent, self.occluded]
    }

    fn validate(&self) -> Result<(), String> {
        let p = self.as_array();
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("state probabilities must be finite and non-negative".to_string());
        }
        let sum: f64 = p.iter().sum();
        if libm::fabs(sum - 1.0) > 1e-9 {
            return Err(format!("state probabilities sum to {sum}, not 1"));
        }
        Ok(())
    }

    fn sample(&self, u: f64) -> PartState {
        let mut acc = 0.0;
        for (state, p) in PartState::ALL.into_iter().zip(self.as_array()) {
            acc += p;
            if u < acc {
                return state;
            }
        }
        // u landed in rounding slack; pick the last state with mass
        PartState::ALL
            .into_iter()
            .zip(self.as_array())
            .rev()
            .find(|(_, p)| *p > 0.0)
            .map_or(PartState::Intact, |(s, _)| s)
    }
}

/// Where one part class tends to sit, as fractions of the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartLayout {
    pub name: String,
    pub center: (f64, f64),
    pub size: (f64, f64),
    pub center_std: (f64, f64),
    pub size_std: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub width: u32,
    pub height: u32,
    pub parts: Vec<PartLayout>,
    pub states: StateProbs,
    /// Per-class replacements for `states`.
    #[serde(default)]
    pub class_states: BTreeMap<String, StateProbs>,
}

impl LayoutSpec {
    pub fn extent(&self) -> ImageExtent {
        ImageExtent { width: self.width, height: self.height }
    }

    pub fn vocabulary(&self) -> Vec<String> {
        self.parts.iter().map(|p| p.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.width == 0 || self.height == 0 {
            return bad("image extent must be at least 1x1".into());
        }
        if self.parts.is_empty() {
            return bad("no parts".into());
        }
        let frac = |v: f64| v.is_finite() && v > 0.0 && v <= 1.0;
        let spread = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        let mut seen = BTreeMap::new();
        for p in &self.parts {
            if seen.insert(p.name.as_str(), ()).is_some() {
                return bad(format!("duplicate part {:?}", p.name));
            }
            if !(frac(p.center.0) && frac(p.center.1) && frac(p.size.0) && frac(p.size.1)) {
                return bad(format!("part {:?}: center and size fractions must lie in (0, 1]", p.name));
            }
            if !(spread(p.center_std.0) && spread(p.center_std.1) && spread(p.size_std.0) && spread(p.size_std.1)) {
                return bad(format!("part {:?}: standard deviations must lie in [0, 1]", p.name));
            }
        }
        self.states.validate().or_else(bad)?;
        for (name, probs) in &self.class_states {
            if !seen.contains_key(name.as_str()) {
                return bad(format!("state override for unknown part {name:?}"));
            }
            probs.validate().map_err(|m| SynthError::InvalidSpec(format!("{name}: {m}")))?;
        }
        Ok(())
    }

    fn states_for(&self, part: &str) -> &StateProbs {
        self.class_states.get(part).unwrap_or(&self.states)
    }

    /// A hand-authored 22-part side view of a bike on a 640x480 canvas.
    ///
    /// Part names follow the public DelftBikes class list; positions and
    /// spreads are illustrative, not measured from that dataset.
    pub fn bike_default() -> Self {
        #[rustfmt::skip]
        const PARTS: [(&str, f64, f64, f64, f64); 22] = [
            ("back_hand_break", 0.65, 0.22, 0.05, 0.03),
            ("back_handle",     0.64, 0.18, 0.06, 0.05),
            ("back_light",      0.12, 0.40, 0.04, 0.04),
            ("back_mudguard",   0.25, 0.44, 0.24, 0.10),
            ("back_pedal",      0.46, 0.68, 0.06, 0.04),
            ("back_reflector",  0.14, 0.46, 0.04, 0.03),
            ("back_wheel",      0.27, 0.62, 0.36, 0.48),
            ("bell",            0.71, 0.15, 0.03, 0.03),
            ("chain",           0.40, 0.67, 0.22, 0.07),
            ("dress_guard",     0.28, 0.52, 0.16, 0.18),
            ("dynamo",          0.80, 0.52, 0.03, 0.05),
            ("front_handbreak", 0.76, 0.21, 0.05, 0.03),
            ("front_handle",    0.77, 0.17, 0.06, 0.05),
            ("front_light",     0.81, 0.33, 0.05, 0.05),
            ("front_mudguard",  0.74, 0.45, 0.20, 0.10),
            ("front_pedal",     0.52, 0.74, 0.07, 0.04),
            ("front_wheel",     0.73, 0.62, 0.36, 0.48),
            ("gear_case",       0.41, 0.65, 0.24, 0.10),
            ("kickstand",       0.40, 0.82, 0.04, 0.14),
            ("lock",            0.30, 0.56, 0.07, 0.06),
            ("saddle",          0.36, 0.22, 0.12, 0.06),
            ("steer",           0.70, 0.20, 0.14, 0.10),
        ];
        let parts = PARTS
            .iter()
            .map(|&(name, cx, cy, w, h)| PartLayout {
                name: name.to_string(),
                center: (cx, cy),
                size: (w, h),
                center_std: (0.02, 0.02),
                size_std: (w * 0.1, h * 0.1),
            })
            .collect();
        Self { width: 640, height: 480, parts, states: StateProbs::BIKE, class_states: BTreeMap::new() }
    }
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    for _ in 0..64 {
        let z: f64 = rng.sample(StandardNormal);
        if libm::fabs(z) <= TRUNCATION {
            return mean + std * z;
        }
    }
    mean
}

/// Coordinates on a 1/64 pixel grid keep box arithmetic (growing,
/// clipping, mirroring) exact in `f64`.
fn snap(b: BBox) -> BBox {
    let q = |v: f64| libm::round(v * 64.0) / 64.0;
    BBox::new(q(b.x_min), q(b.y_min), q(b.x_max), q(b.y_max))
}

pub fn image_id(index: usize) -> String {
    format!("img{index:06}")
}

/// One image and its annotations, a pure function of `(spec, seed, index)`.
pub fn generate_image(spec: &LayoutSpec, seed: u64, index: usize) -> (ImageInfo, Vec<PartAnnotation>) {
    let mut rng = substream(seed, STREAM_LAYOUT, index as u64);
    let id = image_id(index);
    let extent = spec.extent();
    let (w, h) = (spec.width as f64, spec.height as f64);
    let anns = spec
        .parts
        .iter()
        .map(|p| {
            let cx = truncated_normal(&mut rng, p.center.0 * w, p.center_std.0 * w);
            let cy = truncated_normal(&mut rng, p.center.1 * h, p.center_std.1 * h);
            let bw = truncated_normal(&mut rng, p.size.0 * w, p.size_std.0 * w).max(1.0);
            let bh = truncated_normal(&mut rng, p.size.1 * h, p.size_std.1 * h).max(1.0);
            let u: f64 = rng.random();
            PartAnnotation {
                image_id: id.clone(),
                part_class: p.name.clone(),
                bbox: snap(BBox::from_center(cx, cy, bw, bh)).clip(extent),
                state: spec.states_for(&p.name).sample(u),
            }
        })
        .collect();
    let info = ImageInfo { id: id.clone(), width: spec.width, height: spec.height, file_name: Some(format!("{id}.png")) };
    (info, anns)
}

/// Assembles per-image output into a dataset.
pub fn assemble_dataset(
    spec: &LayoutSpec,
    per_image: Vec<(ImageInfo, Vec<PartAnnotation>)>,
) -> Result<Dataset, SynthError> {
    let mut images = Vec::with_capacity(per_image.len());
    let mut annotations = Vec::with_capacity(per_image.len() * spec.parts.len());
    for (info, anns) in per_image {
        images.push(info);
        annotations.extend(anns);
    }
    Dataset::new(images, spec.vocabulary(), annotations).map_err(|e| SynthError::InvalidSpec(e.to_string()))
}

pub fn generate_dataset(spec: &LayoutSpec, n_images: usize, seed: u64) -> Result<Dataset, SynthError> {
    spec.validate()?;
    if n_images == 0 {
        return Err(SynthError::NoImages);
    }
    let per_image = (0..n_images).map(|i| generate_image(spec, seed, i)).collect();
    assemble_dataset(spec, per_image)
}

/// Display color of part class `class` out of `n`; never gray and never the
/// background.
pub fn class_color(class: usize) -> Rgb {
    // golden-angle hue walk, alternating two value levels
    let hue = libm::fmod(class as f64 * 137.507_764, 360.0);
    let value = if class.is_multiple_of(2) { 0.92 } else { 0.68 };
    hsv_to_rgb(hue, 0.85, value)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - libm::fabs(libm::fmod(hp, 2.0) - 1.0));
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| libm::round((t + m) * 255.0).clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Flat background with one filled rectangle per drawn part. Absent parts
/// are not drawn; occluded parts are drawn and their right half covered.
pub fn render_image(dataset: &Dataset, image: usize) -> Raster {
    let info = &dataset.images()[image];
    let mut r = Raster::filled(info.extent(), BACKGROUND);
    for c in 0..dataset.vocabulary().len() {
        let Some(a) = dataset.annotation_at(image, c) else { continue };
        match a.state {
            PartState::Absent => {}
            PartState::Intact | PartState::Damaged => r.fill_box(&a.bbox, class_color(c)),
            PartState::Occluded => {
                r.fill_box(&a.bbox, class_color(c));
                let (cx, _) = a.bbox.center();
                r.fill_box(&BBox::new(cx, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max), BACKGROUND);
            }
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    /// Every present part, exact box.
    Oracle,
    /// The class's mean box in every image, present or not.
    Prior,
    /// Oracle with dropped parts and jittered corners.
    Noisy,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Oracle => "oracle",
            DetectorKind::Prior => "prior",
            DetectorKind::Noisy => "noisy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [DetectorKind::Oracle, DetectorKind::Prior, DetectorKind::Noisy]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub kind: DetectorKind,
    /// Standard deviation of per-coordinate jitter, pixels.
    pub jitter: f64,
    pub drop: f64,
    pub score_min: f64,
    pub score_max: f64,
    pub seed: u64,
}

impl DetectorParams {
    pub fn oracle(seed: u64) -> Self {
        Self { kind: DetectorKind::Oracle, jitter: 0.0, drop: 0.0, score_min: 0.8, score_max: 1.0, seed }
    }

    pub fn prior(seed: u64) -> Self {
        Self { kind: DetectorKind::Prior, jitter: 0.0, drop: 0.0, score_min: 0.5, score_max: 1.0, seed }
    }

    pub fn noisy(seed: u64, drop: f64, jitter: f64) -> Self {
        Self { kind: DetectorKind::Noisy, jitter, drop, score_min: 0.5, score_max: 1.0, seed }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.drop) {
            return Err(SynthError::InvalidParams("drop probability must lie in [0, 1]"));
        }
        if !self.jitter.is_finite() || self.jitter < 0.0 {
            return Err(SynthError::InvalidParams("jitter must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.score_min)
            || !(0.0..=1.0).contains(&self.score_max)
            || self.score_min > self.score_max
        {
            return Err(SynthError::InvalidParams("score bounds must satisfy 0 <= min <= max <= 1"));
        }
        Ok(())
    }

    fn score<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.score_min + (self.score_max - self.score_min) * u
    }
}

/// Dispatches on `params.kind`.
pub fn run_detector(dataset: &Dataset, params: &DetectorParams) -> Result<Vec<Detection>, SynthError> {
    params.validate()?;
    match params.kind {
        DetectorKind::Oracle => Ok(run_oracle(dataset, params)),
        DetectorKind::Prior => run_prior(dataset, params),
        DetectorKind::Noisy => Ok(run_noisy(dataset, params)),
    }
}

fn present_parts(dataset: &Dataset, image: usize) -> impl Iterator<Item = &PartAnnotation> {
    (0..dataset.vocabulary().len())
        .filter_map(move |c| dataset.annotation_at(image, c))
        .filter(|a| a.presence() == Presence::Present)
}

pub fn oracle_image(dataset: &Dataset, params: &DetectorParams, image: usize) -> Vec<Detection> {
    let mut rng = substream(params.seed, STREAM_ORACLE, image as u64);
    present_parts(dataset, image)
        .map(|a| Detection {
            image_id: a.image_id.clone(),
            part_class: a.part_class.clone(),
            bbox: a.bbox,
            score: params.score(&mut rng),
        })
        .collect()
}

pub fn run_oracle(dataset: &Dataset, params: &DetectorParams) -> Vec<Detection> {
    (0..dataset.images().len()).flat_map(|i| oracle_image(dataset, params, i)).collect()
}

/// Mean box per class, `None` for classes without annotations.
pub fn class_mean_boxes(dataset: &Dataset) -> Vec<Option<BBox>> {
    match layout_stats(dataset) {
        Ok(st) => st.classes.iter().map(|c| c.moments.map(|m| m.mean_box())).collect(),
        Err(_) => alloc::vec![None; dataset.vocabulary().len()],
    }
}

pub fn prior_image(
    dataset: &Dataset,
    params: &DetectorParams,
    means: &[Option<BBox>],
    image: usize,
) -> Vec<Detection> {
    let mut rng = substream(params.seed, STREAM_PRIOR, image as u64);
    let info = &dataset.images()[image];
    dataset
        .vocabulary()
        .iter()
        .zip(means)
        .filter_map(|(class, mean)| {
            let b = (*mean)?;
            Some(Detection {
                image_id: info.id.clone(),
                part_class: class.clone(),
                bbox: b.clip(info.extent()),
                score: params.score(&mut rng),
            })
        })
        .collect()
}

/// Fires at every class's dataset-wide mean box in every image.
pub fn run_prior(dataset: &Dataset, params: &DetectorParams) -> Result<Vec<Detection>, SynthError> {
    let n = dataset.images().len();
    if n < 2 {
        return Err(SynthError::TooFewImages { needed: 2, found: n });
    }
    let means = class_mean_boxes(dataset);
    Ok((0..n).flat_map(|i| prior_image(dataset, params, &means, i)).collect())
}

pub fn noisy_image(dataset: &Dataset, params: &DetectorParams, image: usize) -> Vec<Detection> {
    let mut rng = substream(params.seed, STREAM_NOISY, image as u64);
    let extent = dataset.images()[image].extent();
    let mut out = Vec::new();
    for a in present_parts(dataset, image) {
        let u: f64 = rng.random();
        if u < params.drop {
            continue;
        }
        let mut c = a.bbox.to_array();
        if params.jitter > 0.0 {
            for v in &mut c {
                let z: f64 = rng.sample(StandardNormal);
                *v += params.jitter * z;
            }
        }
        let bbox = BBox::new(c[0].min(c[2]), c[1].min(c[3]), c[0].max(c[2]), c[1].max(c[3])).clip(extent);
        out.push(Detection {
            image_id: a.image_id.clone(),
            part_class: a.part_class.clone(),
            bbox,
            score: params.score(&mut rng),
        });
    }
    out
}

pub fn run_noisy(dataset: &Dataset, params: &DetectorParams) -> Vec<Detection> {
    (0..dataset.images().len()).flat_map(|i| noisy_image(dataset, params, i)).collect()
}
