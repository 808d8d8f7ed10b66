//! Axis-aligned box arithmetic in pixel space.
//!
//! Boxes use the `(x, y, w, h)` convention with the origin at the top-left
//! corner and half-open extents `[x, x + w) × [y, y + h)`. Coordinates are
//! real-valued; rounding to whole pixels only happens at the blur boundary
//! (see [`BoundingBox::pixel_span`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box has non-finite coordinate ({x}, {y}, {w}, {h})")]
    NonFinite { x: f64, y: f64, w: f64, h: f64 },
    #[error("box has zero or negative area (w = {w}, h = {h})")]
    Degenerate { w: f64, h: f64 },
}

/// Axis-aligned rectangle, `(x, y, w, h)` in pixels.
///
/// Serialized as the 4-element array `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting non-finite values and non-positive extents.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::NonFinite { x, y, w, h });
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::Degenerate { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Area of the overlap with `other`, 0 when disjoint or merely touching.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Intersection over union. Both boxes must have positive area.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        if self == other {
            // right - x need not round-trip to w
            return 1.0;
        }
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Grows the box about its center by `margin` of its size on every side,
    /// so the result is `w·(1 + 2·margin)` by `h·(1 + 2·margin)`.
    ///
    /// The result may extend past the image; use [`BoundingBox::clip`].
    pub fn expand(&self, margin: f64) -> BoundingBox {
        debug_assert!(margin >= 0.0, "negative margin {margin}");
        if margin == 0.0 {
            return *self;
        }
        let dx = self.w * margin;
        let dy = self.h * margin;
        BoundingBox {
            x: self.x - dx,
            y: self.y - dy,
            w: self.w + 2.0 * dx,
            h: self.h + 2.0 * dy,
        }
    }

    /// Intersection with `[0, image_w] × [0, image_h]`, or `None` when that
    /// intersection has no area.
    pub fn clip(&self, image_w: f64, image_h: f64) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(image_w);
        let y1 = self.bottom().min(image_h);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        // Keep the original values when nothing was cut so clip is exact on
        // in-bounds boxes (x + w - x need not round-trip to w).
        let (x, w) = if x0 == self.x && x1 == self.right() {
            (self.x, self.w)
        } else {
            (x0, fit_extent(x0, x1))
        };
        let (y, h) = if y0 == self.y && y1 == self.bottom() {
            (self.y, self.h)
        } else {
            (y0, fit_extent(y0, y1))
        };
        if w <= 0.0 || h <= 0.0 {
            return None;
        }
        Some(BoundingBox { x, y, w, h })
    }

    /// Whether the box lies within `[0, image_w] × [0, image_h]`.
    pub fn is_within(&self, image_w: f64, image_h: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= image_w && self.bottom() <= image_h
    }

    /// Whole-pixel column and row ranges touched by the box, clamped to the
    /// image. Any pixel the box overlaps, even partially, is included.
    pub fn pixel_span(&self, image_w: usize, image_h: usize) -> PixelRect {
        let clamp = |v: f64, hi: usize| -> usize { v.max(0.0).min(hi as f64) as usize };
        let x0 = clamp(self.x.floor(), image_w);
        let y0 = clamp(self.y.floor(), image_h);
        let x1 = clamp(self.right().ceil(), image_w);
        let y1 = clamp(self.bottom().ceil(), image_h);
        PixelRect { x0, y0, x1, y1 }
    }

    /// Total ordering on `(y, x, w, h)`, the order regions are blurred in.
    pub fn raster_cmp(&self, other: &BoundingBox) -> std::cmp::Ordering {
        self.y
            .total_cmp(&other.y)
            .then(self.x.total_cmp(&other.x))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

/// Largest extent `e <= hi - lo` with `lo + e <= hi` in floating point.
fn fit_extent(lo: f64, hi: f64) -> f64 {
    let mut e = hi - lo;
    while e > 0.0 && lo + e > hi {
        e = e.next_down();
    }
    e
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

/// Half-open integer pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}
