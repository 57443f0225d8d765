//! Small geometric value types shared by the scene, scanner and refinement code.

use serde::{Deserialize, Serialize};

/// A point in panoramic pixel coordinates (x right, y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanoPoint {
    pub x: f64,
    pub y: f64,
}

impl PanoPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Mirror deflection in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalvoPoint {
    pub h: f64,
    pub v: f64,
}

impl GalvoPoint {
    pub const fn new(h: f64, v: f64) -> Self {
        Self { h, v }
    }

    pub fn dist(&self, other: &GalvoPoint) -> f64 {
        (self.h - other.h).hypot(self.v - other.v)
    }
}

/// Symmetric-or-not angular limits for both mirror axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularBounds {
    pub h_min: f64,
    pub h_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl AngularBounds {
    pub const fn symmetric(half_range: f64) -> Self {
        Self {
            h_min: -half_range,
            h_max: half_range,
            v_min: -half_range,
            v_max: half_range,
        }
    }

    pub fn contains(&self, p: GalvoPoint) -> bool {
        p.h >= self.h_min && p.h <= self.h_max && p.v >= self.v_min && p.v <= self.v_max
    }

    /// Clamps `p` into the bounds; the flag reports whether anything moved.
    pub fn clamp(&self, p: GalvoPoint) -> (GalvoPoint, bool) {
        let h = p.h.clamp(self.h_min, self.h_max);
        let v = p.v.clamp(self.v_min, self.v_max);
        (GalvoPoint::new(h, v), h != p.h || v != p.v)
    }

    pub fn intersect(&self, other: &AngularBounds) -> AngularBounds {
        AngularBounds {
            h_min: self.h_min.max(other.h_min),
            h_max: self.h_max.min(other.h_max),
            v_min: self.v_min.max(other.v_min),
            v_max: self.v_max.min(other.v_max),
        }
    }
}

/// Axis-aligned box given by center and full extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteredBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl CenteredBox {
    pub const fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn x0(&self) -> f64 {
        self.cx - self.w / 2.0
    }
    pub fn x1(&self) -> f64 {
        self.cx + self.w / 2.0
    }
    pub fn y0(&self) -> f64 {
        self.cy - self.h / 2.0
    }
    pub fn y1(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// The overlapping part of two boxes, if it has positive area.
    pub fn intersection(&self, other: &CenteredBox) -> Option<CenteredBox> {
        let x0 = self.x0().max(other.x0());
        let x1 = self.x1().min(other.x1());
        let y0 = self.y0().max(other.y0());
        let y1 = self.y1().min(other.y1());
        if x1 > x0 && y1 > y0 {
            Some(CenteredBox::new(
                (x0 + x1) / 2.0,
                (y0 + y1) / 2.0,
                x1 - x0,
                y1 - y0,
            ))
        } else {
            None
        }
    }

    pub fn iou(&self, other: &CenteredBox) -> f64 {
        match self.intersection(other) {
            Some(inter) => {
                let i = inter.area();
                let u = self.area() + other.area() - i;
                if u > 0.0 {
                    i / u
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }
}

/// Angular size of the search camera field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovSize {
    pub w: f64,
    pub h: f64,
}
