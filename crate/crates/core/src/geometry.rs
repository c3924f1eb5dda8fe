//! Axis-aligned boxes and exact ratio thresholds.
//!
//! All box arithmetic is done on integers so that threshold decisions
//! (`IoU > 0.7`, `containment >= 0.8`) are exact rational comparisons rather
//! than floating point approximations.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Pixel-space bounding box. `w` and `h` are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    /// Returns `None` for a degenerate (zero width or height) box.
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Option<Self> {
        if w == 0 || h == 0 {
            return None;
        }
        Some(Self { x, y, w, h })
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    fn x2(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    fn y2(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    pub fn intersection_area(&self, other: &Self) -> u64 {
        let x1 = u64::from(self.x.max(other.x));
        let y1 = u64::from(self.y.max(other.y));
        let x2 = self.x2().min(other.x2());
        let y2 = self.y2().min(other.y2());
        x2.saturating_sub(x1) * y2.saturating_sub(y1)
    }

    pub fn union_area(&self, other: &Self) -> u64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Intersection over union as a float, for reporting only. Threshold
    /// decisions go through [`BoundingBox::iou_exceeds`].
    pub fn iou(&self, other: &Self) -> f64 {
        self.intersection_area(other) as f64 / self.union_area(other) as f64
    }

    /// `IoU > threshold`, exactly.
    pub fn iou_exceeds(&self, other: &Self, threshold: Ratio) -> bool {
        threshold.lt_fraction(self.intersection_area(other), self.union_area(other))
    }

    /// Smallest rectangle covering both boxes.
    pub fn enclosing(&self, other: &Self) -> Self {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        let x2 = self.x2().max(other.x2());
        let y2 = self.y2().max(other.y2());
        Self {
            x,
            y,
            w: (x2 - u64::from(x)) as u32,
            h: (y2 - u64::from(y)) as u32,
        }
    }
}

/// A non-negative rational `num / den` used for configurable thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    num: u64,
    den: u64,
}

const RATIO_SCALE: u64 = 1_000_000_000;

impl Ratio {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        Some(Self { num, den })
    }

    /// Converts a decimal threshold (as typed in a config file) to a rational
    /// with nine decimal digits, so `0.7` becomes exactly `7/10`.
    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() || value < 0.0 {
            return None;
        }
        let num = (value * RATIO_SCALE as f64).round() as u64;
        let g = gcd(num, RATIO_SCALE);
        Some(Self {
            num: num / g,
            den: RATIO_SCALE / g,
        })
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `self < a / b`
    pub fn lt_fraction(&self, a: u64, b: u64) -> bool {
        u128::from(a) * u128::from(self.den) > u128::from(self.num) * u128::from(b)
    }

    /// `self <= a / b`
    pub fn le_fraction(&self, a: u64, b: u64) -> bool {
        u128::from(a) * u128::from(self.den) >= u128::from(self.num) * u128::from(b)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn window_boxes_overlap_at_point_eight() {
        let a = bb(0, 0, 10, 10);
        let b = bb(0, 0, 10, 8);
        assert_eq!(a.intersection_area(&b), 80);
        assert_eq!(a.union_area(&b), 100);
        assert!((a.iou(&b) - 0.8).abs() < 1e-12);
        assert!(a.iou_exceeds(&b, Ratio::from_f64(0.7).unwrap()));
        assert_eq!(a.enclosing(&b), a);
    }

    #[test]
    fn disjoint_boxes_have_zero_iou() {
        let a = bb(0, 0, 10, 10);
        let b = bb(20, 20, 10, 10);
        assert_eq!(a.intersection_area(&b), 0);
        assert_eq!(a.iou(&b), 0.0);
        assert!(!a.iou_exceeds(&b, Ratio::from_f64(0.7).unwrap()));
    }

    #[test]
    fn touching_edges_do_not_intersect() {
        assert_eq!(bb(0, 0, 5, 5).intersection_area(&bb(5, 0, 5, 5)), 0);
    }

    #[test]
    fn threshold_is_strict() {
        // 7/10 exactly: IoU == 0.7 must not merge.
        let a = bb(0, 0, 10, 10);
        let b = bb(0, 0, 10, 7);
        assert_eq!(a.intersection_area(&b), 70);
        assert!(!a.iou_exceeds(&b, Ratio::from_f64(0.7).unwrap()));
    }

    #[test]
    fn ratio_from_decimal_is_exact() {
        let r = Ratio::from_f64(0.7).unwrap();
        assert_eq!((r.numer(), r.denom()), (7, 10));
        assert!(Ratio::from_f64(f64::NAN).is_none());
        assert!(Ratio::from_f64(-0.1).is_none());
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(BoundingBox::new(0, 0, 0, 4).is_none());
    }
}
