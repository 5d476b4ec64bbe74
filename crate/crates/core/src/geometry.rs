//! Axis-aligned box arithmetic.
//!
//! Boxes use corner form `[x_min, y_min, x_max, y_max]` in floating-point
//! pixels, origin at the top-left of the image.

use serde::{Deserialize, Serialize};

/// Axis-aligned bounding box in corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    /// Converts `[x, y, width, height]` to corner form.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Finite coordinates with `min <= max` on both axes.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.x_min * s, self.y_min * s, self.x_max * s, self.y_max * s)
    }

    /// Overlap of two boxes, `None` when they do not share positive area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        );
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        other.x_min >= self.x_min
            && other.y_min >= self.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn clip(&self, extent: ImageExtent) -> BBox {
        let (w, h) = (extent.width as f64, extent.height as f64);
        BBox::new(
            self.x_min.clamp(0.0, w),
            self.y_min.clamp(0.0, h),
            self.x_max.clamp(0.0, w),
            self.y_max.clamp(0.0, h),
        )
    }

    /// Lexicographic total order over the four coordinates.
    pub fn total_cmp(&self, other: &BBox) -> core::cmp::Ordering {
        self.x_min
            .total_cmp(&other.x_min)
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
    }
}

/// Image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageExtent {
    pub width: u32,
    pub height: u32,
}

impl ImageExtent {
    /// Returns `None` for a zero dimension.
    pub fn new(width: u32, height: u32) -> Option<Self> {
        (width >= 1 && height >= 1).then_some(Self { width, height })
    }

    pub fn full_box(&self) -> BBox {
        BBox::new(0.0, 0.0, self.width as f64, self.height as f64)
    }
}

/// Intersection over union. Zero-area boxes score 0 against everything,
/// themselves included.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let inter = match a.intersection(b) {
        Some(i) => i.area(),
        None => return 0.0,
    };
    let union = area_a + area_b - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Grows every side by `c` pixels and clips to the image.
pub fn expand(b: &BBox, c: f64, extent: ImageExtent) -> BBox {
    BBox::new(b.x_min - c, b.y_min - c, b.x_max + c, b.y_max + c).clip(extent)
}

/// Moves every side inward by `c` pixels; `None` once the box collapses
/// (`2c` reaches its width or height).
pub fn shrink(b: &BBox, c: f64) -> Option<BBox> {
    if 2.0 * c >= b.width() || 2.0 * c >= b.height() {
        return None;
    }
    Some(BBox::new(b.x_min + c, b.y_min + c, b.x_max - c, b.y_max - c))
}

/// Reflects the box center through the image center on both axes, keeping
/// the size. A box that would overhang the border is slid back inside.
pub fn mirror_about_center(b: &BBox, extent: ImageExtent) -> BBox {
    let (w, h) = (extent.width as f64, extent.height as f64);
    let moved = BBox::new(w - b.x_max, h - b.y_max, w - b.x_min, h - b.y_min);
    let dx = slide(moved.x_min, moved.x_max, w);
    let dy = slide(moved.y_min, moved.y_max, h);
    moved.translate(dx, dy)
}

fn slide(lo: f64, hi: f64, limit: f64) -> f64 {
    if lo < 0.0 {
        -lo
    } else if hi > limit {
        limit - hi
    } else {
        0.0
    }
}
