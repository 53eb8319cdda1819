//! Axis-aligned boxes in normalized center/size form and the IoU family.
//!
//! All overlap metrics are symmetric bit-for-bit: every intermediate is built
//! from commutative operations (`min`, `max`, `+`, squares of differences).

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Bounding box `(cx, cy, w, h)` in normalized image coordinates.
///
/// Centers lie in `[0, 1]`, sizes in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

/// Corner form `(x1, y1, x2, y2)` with `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        check_center("cx", cx)?;
        check_center("cy", cy)?;
        check_size("w", w)?;
        check_size("h", h)?;
        Ok(Self { cx, cy, w, h })
    }

    pub fn from_array(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_corners(&self) -> CornerBox {
        to_corners(self)
    }
}

fn check_center(field: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidBox {
            field,
            value,
            reason: "center must lie in [0, 1]",
        });
    }
    Ok(())
}

fn check_size(field: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(Error::InvalidBox {
            field,
            value,
            reason: "size must lie in (0, 1]",
        });
    }
    Ok(())
}

impl CornerBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if !(x1 < x2) {
            return Err(Error::InvalidBox {
                field: "x2",
                value: x2,
                reason: "x2 must exceed x1",
            });
        }
        if !(y1 < y2) {
            return Err(Error::InvalidBox {
                field: "y2",
                value: y2,
                reason: "y2 must exceed y1",
            });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

pub fn to_corners(b: &BBox) -> CornerBox {
    let (hw, hh) = (b.w / 2.0, b.h / 2.0);
    CornerBox {
        x1: b.cx - hw,
        y1: b.cy - hh,
        x2: b.cx + hw,
        y2: b.cy + hh,
    }
}

/// Inverse of [`to_corners`]. Fails if the result violates the [`BBox`] invariants.
///
/// The round trip is exact up to rounding in the last place.
pub fn to_box(c: &CornerBox) -> Result<BBox> {
    BBox::new(
        (c.x1 + c.x2) / 2.0,
        (c.y1 + c.y2) / 2.0,
        c.x2 - c.x1,
        c.y2 - c.y1,
    )
}

/// Intermediate quantities shared by the IoU family.
struct Overlap {
    inter: f64,
    union: f64,
    enclose_w: f64,
    enclose_h: f64,
}

fn overlap(a: [f64; 4], b: [f64; 4]) -> Overlap {
    let (ax1, ax2) = (a[0] - a[2] / 2.0, a[0] + a[2] / 2.0);
    let (ay1, ay2) = (a[1] - a[3] / 2.0, a[1] + a[3] / 2.0);
    let (bx1, bx2) = (b[0] - b[2] / 2.0, b[0] + b[2] / 2.0);
    let (by1, by2) = (b[1] - b[3] / 2.0, b[1] + b[3] / 2.0);

    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    // Areas from the same corner widths as the intersection, so identical
    // boxes give inter == union exactly.
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;

    Overlap {
        inter,
        union,
        enclose_w: ax2.max(bx2) - ax1.min(bx1),
        enclose_h: ay2.max(by2) - ay1.min(by1),
    }
}

/// IoU on raw `(cx, cy, w, h)` arrays with positive sizes.
///
/// Unlike [`iou`] this accepts boxes that leave the unit square, which is
/// what confidence-interval candidates do.
pub fn iou_cxcywh(a: [f64; 4], b: [f64; 4]) -> f64 {
    IouRef::new(a).iou(b)
}

/// One box with its corners precomputed, for many IoU evaluations against
/// it. Gives bitwise the same values as [`iou_cxcywh`].
#[derive(Debug, Clone, Copy)]
pub struct IouRef {
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
    area: f64,
}

impl IouRef {
    pub fn new(a: [f64; 4]) -> Self {
        let (x1, x2) = (a[0] - a[2] / 2.0, a[0] + a[2] / 2.0);
        let (y1, y2) = (a[1] - a[3] / 2.0, a[1] + a[3] / 2.0);
        Self {
            x1,
            x2,
            y1,
            y2,
            area: (x2 - x1) * (y2 - y1),
        }
    }

    #[inline]
    pub fn iou(&self, b: [f64; 4]) -> f64 {
        let (bx1, bx2) = (b[0] - b[2] / 2.0, b[0] + b[2] / 2.0);
        let (by1, by2) = (b[1] - b[3] / 2.0, b[1] + b[3] / 2.0);
        let iw = (self.x2.min(bx2) - self.x1.max(bx1)).max(0.0);
        let ih = (self.y2.min(by2) - self.y1.max(by1)).max(0.0);
        let inter = iw * ih;
        inter / (self.area + (bx2 - bx1) * (by2 - by1) - inter)
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    iou_cxcywh(a.to_array(), b.to_array())
}

/// Generalized IoU: `IoU - (|C| - |A ∪ B|) / |C|` with `C` the smallest enclosing box.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let o = overlap(a.to_array(), b.to_array());
    let enclose = o.enclose_w * o.enclose_h;
    // Under containment C and U agree up to rounding; keep GIoU ≤ IoU.
    o.inter / o.union - (enclose - o.union).max(0.0) / enclose
}

/// Distance IoU: `IoU - ρ²/c²`, ρ the center distance and `c` the enclosing diagonal.
pub fn diou(a: &BBox, b: &BBox) -> f64 {
    let o = overlap(a.to_array(), b.to_array());
    o.inter / o.union - center_penalty(a, b, &o)
}

/// Complete IoU: DIoU minus the aspect-ratio consistency term `α·v`.
pub fn ciou(a: &BBox, b: &BBox) -> f64 {
    let o = overlap(a.to_array(), b.to_array());
    let iou = o.inter / o.union;
    let d = (a.w / a.h).atan() - (b.w / b.h).atan();
    let v = 4.0 / (PI * PI) * d * d;
    // v == 0 covers the identical-box case where α would be 0/0.
    let aspect = if v == 0.0 {
        0.0
    } else {
        v * v / ((1.0 - iou) + v)
    };
    iou - center_penalty(a, b, &o) - aspect
}

fn center_penalty(a: &BBox, b: &BBox, o: &Overlap) -> f64 {
    let dx = a.cx - b.cx;
    let dy = a.cy - b.cy;
    let diag = o.enclose_w * o.enclose_w + o.enclose_h * o.enclose_h;
    (dx * dx + dy * dy) / diag
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn corners_examples() {
        let c = to_corners(&bx(0.5, 0.5, 0.4, 0.2));
        close(c.x1, 0.3, 1e-15);
        close(c.y1, 0.4, 1e-15);
        close(c.x2, 0.7, 1e-15);
        close(c.y2, 0.6, 1e-15);

        let c = to_corners(&bx(0.5, 0.5, 1.0, 1.0));
        assert_eq!((c.x1, c.y1, c.x2, c.y2), (0.0, 0.0, 1.0, 1.0));

        let c = to_corners(&bx(0.2, 0.3, 0.1, 0.1));
        close(c.x1, 0.15, 1e-15);
        close(c.y1, 0.25, 1e-15);
        close(c.x2, 0.25, 1e-15);
        close(c.y2, 0.35, 1e-15);
    }

    #[test]
    fn box_rejects_invalid() {
        assert!(BBox::new(1.1, 0.5, 0.1, 0.1).is_err());
        assert!(BBox::new(0.5, -0.1, 0.1, 0.1).is_err());
        assert!(BBox::new(0.5, 0.5, 0.0, 0.1).is_err());
        assert!(BBox::new(0.5, 0.5, 0.1, 1.5).is_err());
        assert!(BBox::new(f64::NAN, 0.5, 0.1, 0.1).is_err());
        assert!(BBox::new(0.5, 0.5, f64::NAN, 0.1).is_err());
        assert!(CornerBox::new(0.5, 0.1, 0.5, 0.2).is_err());
        assert!(CornerBox::new(0.1, 0.3, 0.5, 0.2).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.5, 0.5, 0.2, 0.2);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&bx(0.1, 0.1, 0.05, 0.05), &bx(0.9, 0.9, 0.05, 0.05)), 0.0);
        close(iou(&a, &bx(0.6, 0.5, 0.2, 0.2)), 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn giou_examples() {
        let a = bx(0.5, 0.5, 0.2, 0.2);
        close(giou(&a, &a), 1.0, 1e-15);
        close(giou(&a, &bx(0.6, 0.5, 0.2, 0.2)), 1.0 / 3.0, 1e-12);
        let g = giou(&bx(0.1, 0.1, 0.01, 0.01), &bx(0.9, 0.9, 0.01, 0.01));
        close(g, -(0.6561 - 0.0002) / 0.6561, 1e-12);
        assert!(g < -0.999695 && g > -0.999696);
    }

    #[test]
    fn diou_ciou_examples() {
        let a = bx(0.5, 0.5, 0.2, 0.2);
        close(diou(&a, &a), 1.0, 1e-15);
        close(ciou(&a, &a), 1.0, 1e-15);

        let b = bx(0.6, 0.5, 0.2, 0.2);
        let expected = 1.0 / 3.0 - 0.01 / 0.13;
        close(diou(&a, &b), expected, 1e-12);
        close(ciou(&a, &b), expected, 1e-12);
        close(expected, 0.256410, 1e-6);

        let gt = bx(0.5, 0.5, 0.4, 0.4);
        close(diou(&gt, &a), 0.25, 1e-12);
        close(ciou(&gt, &a), 0.25, 1e-12);
    }

    #[test]
    fn ciou_penalizes_aspect_mismatch() {
        let a = bx(0.5, 0.5, 0.4, 0.2);
        let b = bx(0.5, 0.5, 0.2, 0.4);
        assert!(ciou(&a, &b) < diou(&a, &b));
    }
}
