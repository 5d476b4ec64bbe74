//! Minimal RGB8 raster used for schematic renders and context masking.

use alloc::vec::Vec;
use core::ops::Range;

use crate::geometry::{BBox, ImageExtent};

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    extent: ImageExtent,
    data: Vec<u8>,
}

impl Raster {
    pub fn filled(extent: ImageExtent, color: Rgb) -> Self {
        let n = extent.width as usize * extent.height as usize;
        let data = if color[0] == color[1] && color[1] == color[2] {
            alloc::vec![color[0]; n * 3]
        } else {
            color.iter().copied().cycle().take(n * 3).collect()
        };
        Self { extent, data }
    }

    /// Wraps row-major RGB8 bytes; `None` if the length does not match.
    pub fn from_raw(extent: ImageExtent, data: Vec<u8>) -> Option<Self> {
        (data.len() == extent.width as usize * extent.height as usize * 3)
            .then_some(Self { extent, data })
    }

    pub fn extent(&self) -> ImageExtent {
        self.extent
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.extent.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&c);
    }

    pub fn fill_box(&mut self, b: &BBox, c: Rgb) {
        let (xs, ys) = pixel_span(b, self.extent);
        if xs.is_empty() {
            return;
        }
        for y in ys {
            let (a, z) = (self.offset(xs.start, y), self.offset(xs.end, y));
            for px in self.data[a..z].chunks_exact_mut(3) {
                px.copy_from_slice(&c);
            }
        }
    }

    /// Copies the pixels of `b` in `src` to positions offset by `(dx, dy)`;
    /// pixels that would leave the frame are dropped.
    ///
    /// Both rasters must share an extent.
    pub fn copy_shifted(&mut self, src: &Raster, b: &BBox, (dx, dy): (i64, i64)) {
        debug_assert_eq!(self.extent, src.extent);
        let (w, h) = (self.extent.width as i64, self.extent.height as i64);
        let (xs, ys) = pixel_span(b, self.extent);
        let x0 = (xs.start as i64 + dx).max(0);
        let x1 = (xs.end as i64 + dx).min(w);
        if x0 >= x1 {
            return;
        }
        for sy in ys {
            let ty = sy as i64 + dy;
            if !(0..h).contains(&ty) {
                continue;
            }
            let s = src.offset((x0 - dx) as u32, sy);
            let t = self.offset(x0 as u32, ty as u32);
            let len = (x1 - x0) as usize * 3;
            self.data[t..t + len].copy_from_slice(&src.data[s..s + len]);
        }
    }

    /// Iterates over the pixels of `b` (see [`pixel_span`]).
    pub fn pixels_in(&self, b: &BBox) -> impl Iterator<Item = (u32, u32, Rgb)> + '_ {
        let (xs, ys) = pixel_span(b, self.extent);
        ys.flat_map(move |y| xs.clone().map(move |x| (x, y, self.get(x, y))))
    }
}

/// Pixel columns and rows whose centers fall inside `b`, clamped to the image.
///
/// Pixel `(x, y)` covers `[x, x+1) x [y, y+1)`; it belongs to a box when its
/// center `(x + 0.5, y + 0.5)` lies in `[x_min, x_max) x [y_min, y_max)`.
pub fn pixel_span(b: &BBox, extent: ImageExtent) -> (Range<u32>, Range<u32>) {
    let span = |lo: f64, hi: f64, limit: u32| {
        let a = libm::ceil(lo - 0.5).clamp(0.0, limit as f64) as u32;
        let z = libm::ceil(hi - 0.5).clamp(0.0, limit as f64) as u32;
        a..z.max(a)
    };
    (span(b.x_min, b.x_max, extent.width), span(b.y_min, b.y_max, extent.height))
}

/// True when pixel `(x, y)` belongs to `b` under the [`pixel_span`] rule.
pub fn pixel_in(b: &BBox, x: u32, y: u32) -> bool {
    b.contains_point(x as f64 + 0.5, y as f64 + 0.5)
}
