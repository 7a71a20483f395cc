//! Points of [−1, 1] carrying their distance to the nearest endpoint.
//!
//! Orbits spend long stretches next to ±1 where `1 − |x|` underflows the
//! resolution of `x` itself. The distance is carried separately so that the
//! neutral pieces can be iterated without cancellation.

use serde::{Deserialize, Serialize};

/// Which branch of the map a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchId {
    /// Domain [−1, 0).
    Left,
    /// Domain (0, 1].
    Right,
}

impl BranchId {
    pub fn other(self) -> Self {
        match self {
            BranchId::Left => BranchId::Right,
            BranchId::Right => BranchId::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    x: f64,
    edge: f64,
}

impl Point {
    pub fn new(x: f64) -> Self {
        Point { x, edge: 1.0 - x.abs() }
    }

    /// The point −1 + d.
    pub fn from_lower_gap(d: f64) -> Self {
        let x = -1.0 + d;
        if d <= 1.0 {
            Point { x, edge: d }
        } else {
            Point { x, edge: 2.0 - d }
        }
    }

    /// The point 1 − u.
    pub fn from_upper_gap(u: f64) -> Self {
        let x = 1.0 - u;
        if u <= 1.0 {
            Point { x, edge: u }
        } else {
            Point { x, edge: 2.0 - u }
        }
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    /// 1 − |x|, accurate near both endpoints.
    #[inline]
    pub fn edge(&self) -> f64 {
        self.edge
    }

    /// 1 + x.
    #[inline]
    pub fn lower_gap(&self) -> f64 {
        if self.x <= 0.0 {
            self.edge
        } else {
            1.0 + self.x
        }
    }

    /// 1 − x.
    #[inline]
    pub fn upper_gap(&self) -> f64 {
        if self.x >= 0.0 {
            self.edge
        } else {
            1.0 - self.x
        }
    }

    /// Branch containing the point; the sign bit decides at ±0.
    #[inline]
    pub fn branch(&self) -> BranchId {
        if self.x < 0.0 || (self.x == 0.0 && self.x.is_sign_negative()) {
            BranchId::Left
        } else {
            BranchId::Right
        }
    }

    /// Distance to the point 0 from the appropriate side.
    #[inline]
    pub fn abs(&self) -> f64 {
        self.x.abs()
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point::new(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_survive_tiny_distances() {
        let p = Point::from_lower_gap(1e-30);
        assert_eq!(p.x(), -1.0);
        assert_eq!(p.lower_gap(), 1e-30);
        assert_eq!(p.upper_gap(), 2.0);
        let q = Point::from_upper_gap(3e-200);
        assert_eq!(q.upper_gap(), 3e-200);
        assert_eq!(q.branch(), BranchId::Right);
    }

    #[test]
    fn signed_zero_picks_branch() {
        assert_eq!(Point::new(-0.0).branch(), BranchId::Left);
        assert_eq!(Point::new(0.0).branch(), BranchId::Right);
    }

    #[test]
    fn wide_gaps_cross_zero() {
        let p = Point::from_lower_gap(1.5);
        assert!((p.x() - 0.5).abs() < 1e-15);
        assert!((p.edge() - 0.5).abs() < 1e-15);
    }
}
