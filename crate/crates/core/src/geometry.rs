//! Axis-aligned boxes and the overlap scores used for association and evaluation.
//!
//! Boxes live in global frame pixels with a top-left origin and `y` growing
//! downward, the same convention as the MOT text format.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned box `(x, y, w, h)` with strictly positive extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite ({x}, {y}, {w}, {h})")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!("non-positive extent {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Scales the box together with the coordinate frame about the origin.
    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(self.x * s, self.y * s, self.w * s, self.h * s)
    }

    /// True when `other` lies entirely inside `self` (shared edges allowed).
    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    /// Point membership with inclusive left/top and exclusive right/bottom edges.
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Distance-IoU: IoU minus the squared center distance normalized by the
/// squared diagonal of the smallest enclosing box. Always in `(-1, 1]`.
pub fn diou(a: &BBox, b: &BBox) -> f64 {
    let (acx, acy) = a.center();
    let (bcx, bcy) = b.center();
    let rho2 = (acx - bcx).powi(2) + (acy - bcy).powi(2);
    let ew = a.right().max(b.right()) - a.x.min(b.x);
    let eh = a.bottom().max(b.bottom()) - a.y.min(b.y);
    let c2 = ew * ew + eh * eh;
    iou(a, b) - rho2 / c2
}
