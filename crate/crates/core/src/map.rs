//! Concrete, validated representatives of the map family.
//!
//! Each branch is assembled from two explicit pieces and a blend:
//!
//! * left branch: `x + b₁(1+x)^{1+ℓ₁}` on U₋₁, `1 − a₁|x|^{k₁}` on U₀₋;
//! * right branch: `−1 + a₂x^{k₂}` on U₀₊, `x − b₂(1−x)^{1+ℓ₂}` on U₊₁;
//!
//! with U₋₁ = g(U₀₊) and U₊₁ = g(U₀₋). In between, the two pieces are mixed
//! with the quintic smoothstep weight, which keeps the map C².
//!
//! When an ℓ vanishes the neutral piece is replaced by the hyperbolic form
//! `d ↦ (1+b)d + ξ d²` in the distance `d` to the fixed point.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::MapParams;
use crate::point::{BranchId, Point};
use crate::roots::solve_increasing;

/// Smallest ι the constructor is willing to shrink to.
const IOTA_FLOOR: f64 = 1e-6;
/// Grid points per branch used by the monotonicity check.
const VALIDATION_GRID: usize = 20_000;
/// Retries with geometrically smaller ι when validation fails.
const IOTA_RETRIES: usize = 40;
const IOTA_RETRY_FACTOR: f64 = 0.8;
/// Samples per cell used by the expansion certificate.
const CERT_SAMPLES: usize = 100;
/// Deeper cells are checked at their endpoints only.
const CERT_FULL_DEPTH: usize = 64;

/// Local form `d ↦ d + b d^{1+ℓ}` (or `(1+b)d + ξd²`) near a fixed point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Neutral {
    pub ell: f64,
    pub b: f64,
    pub xi: f64,
}

impl Neutral {
    #[inline]
    pub fn value(&self, d: f64) -> f64 {
        if self.ell > 0.0 {
            d + self.b * d.powf(1.0 + self.ell)
        } else {
            (1.0 + self.b) * d + self.xi * d * d
        }
    }

    #[inline]
    pub fn d1(&self, d: f64) -> f64 {
        if self.ell > 0.0 {
            1.0 + self.b * (1.0 + self.ell) * d.powf(self.ell)
        } else {
            1.0 + self.b + 2.0 * self.xi * d
        }
    }

    #[inline]
    pub fn d2(&self, d: f64) -> f64 {
        if self.ell > 0.0 {
            self.b * (1.0 + self.ell) * self.ell * d.powf(self.ell - 1.0)
        } else {
            2.0 * self.xi
        }
    }

    /// Solves `value(d) = target` for `d ≥ 0`.
    pub fn invert(&self, target: f64) -> Result<f64> {
        if target <= 0.0 {
            return Ok(0.0);
        }
        // value(d) ≥ d and value(d)/d is increasing, which pins a tight bracket;
        // widened by a few ulps because rounding can put both ends on one side.
        let hi = target / self.d1(0.0).min(1.0 + self.b) * (1.0 + 8.0 * f64::EPSILON);
        let lo = target / (self.value(target) / target) * (1.0 - 8.0 * f64::EPSILON);
        let d = solve_increasing(|d| (self.value(d) - target, self.d1(d)), lo, hi)?;
        let resid = (self.value(d) - target).abs();
        if resid > 1e-12 * target {
            return Err(Error::ConvergenceFailure(format!("neutral inverse residual {resid:e} at target {target:e}")));
        }
        Ok(d)
    }
}

/// Local form `s ↦ a s^k` in the distance `s` to the discontinuity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Critical {
    pub k: f64,
    pub a: f64,
}

impl Critical {
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        self.a * s.powf(self.k)
    }

    #[inline]
    pub fn d1(&self, s: f64) -> f64 {
        self.a * self.k * s.powf(self.k - 1.0)
    }

    #[inline]
    pub fn d2(&self, s: f64) -> f64 {
        self.a * self.k * (self.k - 1.0) * s.powf(self.k - 2.0)
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        (v / self.a).powf(1.0 / self.k)
    }
}

/// Quintic smoothstep 6t⁵ − 15t⁴ + 10t³ and its first two derivatives.
#[inline]
fn smoothstep(t: f64) -> (f64, f64, f64) {
    let t = t.clamp(0.0, 1.0);
    let t2 = t * t;
    let w = t2 * t * (10.0 + t * (-15.0 + 6.0 * t));
    let w1 = 30.0 * t2 * (1.0 - t) * (1.0 - t);
    let w2 = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    (w, w1, w2)
}

/// Coefficients of the smoothstep weight, lowest order first.
pub const BLEND_POLY: [f64; 6] = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];

/// Boundaries of the explicit regions actually used.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Junctions {
    /// Right end of U₋₁.
    pub u_minus1: f64,
    /// Left end of U₀₋ (equals −ι).
    pub u_zero_minus: f64,
    /// Right end of U₀₊ (equals ι).
    pub u_zero_plus: f64,
    /// Left end of U₊₁.
    pub u_plus1: f64,
}

/// Value and derivatives of g at a point.
#[derive(Debug, Clone, Copy)]
struct Jet {
    v: f64,
    d1: f64,
    d2: f64,
}

/// Region of a branch a point falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Neutral,
    Blend,
    Critical,
}

/// A validated map of the family.
#[derive(Debug, Clone, Serialize)]
pub struct MapModel {
    params: MapParams,
    iota: f64,
    junctions: Junctions,
    blend_poly: [f64; 6],
    left_neutral: Neutral,
    right_neutral: Neutral,
    left_critical: Critical,
    right_critical: Critical,
    /// 1 + (right end of U₋₁).
    left_neutral_gap: f64,
    /// 1 − (left end of U₊₁).
    right_neutral_gap: f64,
    lambda_est: f64,
    n_minus: usize,
    n_plus: usize,
    #[serde(skip)]
    x0_minus: Point,
    #[serde(skip)]
    x0_plus: Point,
    fingerprint: u64,
    iota_shrunk: bool,
}

impl MapModel {
    /// Builds and validates the map for `params`.
    ///
    /// If the blended map fails validation at the requested ι, smaller
    /// values are tried before giving up; the first error is returned.
    pub fn build(params: MapParams) -> Result<Self> {
        params.validate()?;
        let first = match Self::build_with_iota(params, params.iota) {
            Ok(m) => return Ok(m),
            Err(e) => e,
        };
        let mut iota = params.iota;
        for _ in 0..IOTA_RETRIES {
            iota *= IOTA_RETRY_FACTOR;
            if iota < IOTA_FLOOR {
                break;
            }
            if let Ok(mut m) = Self::build_with_iota(params, iota) {
                m.iota_shrunk = true;
                return Ok(m);
            }
        }
        Err(first)
    }

    fn build_with_iota(params: MapParams, requested_iota: f64) -> Result<Self> {
        let left_critical = Critical { k: params.k1, a: params.a1 };
        let right_critical = Critical { k: params.k2, a: params.a2 };

        // Shrink ι until both blend windows are at least blend_width·(1−ι) wide.
        let mut iota = requested_iota;
        let mut iota_shrunk = requested_iota != params.iota;
        for crit in [right_critical, left_critical] {
            let slack = |i: f64| (1.0 - params.blend_width) * (1.0 - i) - crit.value(i);
            if slack(iota) < 0.0 {
                let mut lo = 0.0;
                let mut hi = iota;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if slack(mid) >= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                iota = lo;
                iota_shrunk = true;
            }
        }
        if iota < IOTA_FLOOR {
            return Err(Error::RangeMismatch(format!("explicit pieces need iota < {IOTA_FLOOR:e}")));
        }

        let left_neutral_gap = right_critical.value(iota);
        let right_neutral_gap = left_critical.value(iota);
        let junctions = Junctions {
            u_minus1: -1.0 + left_neutral_gap,
            u_zero_minus: -iota,
            u_zero_plus: iota,
            u_plus1: 1.0 - right_neutral_gap,
        };
        if !(junctions.u_minus1 < junctions.u_zero_minus && junctions.u_zero_plus < junctions.u_plus1) {
            return Err(Error::RangeMismatch(format!("U regions overlap for iota = {iota}")));
        }

        let mut model = MapModel {
            params,
            iota,
            junctions,
            blend_poly: BLEND_POLY,
            left_neutral: Neutral { ell: params.ell1, b: params.b1, xi: params.xi_coeff1 },
            right_neutral: Neutral { ell: params.ell2, b: params.b2, xi: params.xi_coeff2 },
            left_critical,
            right_critical,
            left_neutral_gap,
            right_neutral_gap,
            lambda_est: f64::NAN,
            n_minus: 0,
            n_plus: 0,
            x0_minus: Point::new(-0.5),
            x0_plus: Point::new(0.5),
            fingerprint: 0,
            iota_shrunk,
        };
        model.fingerprint = model.compute_fingerprint();
        model.validate_shape()?;
        model.x0_minus = model.inverse(BranchId::Left, Point::new(0.0))?;
        model.x0_plus = model.inverse(BranchId::Right, Point::new(0.0))?;
        model.certify_expansion()?;
        Ok(model)
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let p = &self.params;
        for v in [p.ell1, p.ell2, p.k1, p.k2, p.a1, p.a2, p.b1, p.b2, self.iota, p.blend_width, p.xi_coeff1, p.xi_coeff2] {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    /// ι actually used (may be smaller than requested).
    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn iota_shrunk(&self) -> bool {
        self.iota_shrunk
    }

    pub fn junctions(&self) -> Junctions {
        self.junctions
    }

    pub fn blend_poly(&self) -> [f64; 6] {
        self.blend_poly
    }

    pub fn lambda_est(&self) -> f64 {
        self.lambda_est
    }

    /// False where g(p) goes through the blend, which is evaluated in x and so
    /// carries absolute rather than relative error near ±1.
    pub fn exact_in_gaps(&self, p: Point) -> bool {
        match p.branch() {
            BranchId::Left => p.lower_gap() <= self.left_neutral_gap || p.x() >= -self.iota,
            BranchId::Right => p.x() <= self.iota || p.upper_gap() <= self.right_neutral_gap,
        }
    }

    pub fn n_minus(&self) -> usize {
        self.n_minus
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    /// Identity tag tying derived tables to this model.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Left end of Δ₀⁻ = (x₀⁻, 0).
    pub fn x0_minus(&self) -> Point {
        self.x0_minus
    }

    /// Right end of Δ₀⁺ = (0, x₀⁺).
    pub fn x0_plus(&self) -> Point {
        self.x0_plus
    }

    pub fn left_neutral(&self) -> Neutral {
        self.left_neutral
    }

    pub fn right_neutral(&self) -> Neutral {
        self.right_neutral
    }

    pub fn left_critical(&self) -> Critical {
        self.left_critical
    }

    pub fn right_critical(&self) -> Critical {
        self.right_critical
    }

    /// Region of `p` within its branch.
    pub fn region(&self, p: Point) -> Region {
        match p.branch() {
            BranchId::Left => {
                if p.lower_gap() <= self.left_neutral_gap {
                    Region::Neutral
                } else if p.x() >= -self.iota {
                    Region::Critical
                } else {
                    Region::Blend
                }
            }
            BranchId::Right => {
                if p.x() <= self.iota {
                    Region::Critical
                } else if p.upper_gap() <= self.right_neutral_gap {
                    Region::Neutral
                } else {
                    Region::Blend
                }
            }
        }
    }

    /// One step of the map. Exact zero is resolved by its sign bit.
    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        match p.branch() {
            BranchId::Left => {
                let d = p.lower_gap();
                if d <= self.left_neutral_gap {
                    Point::from_lower_gap(self.left_neutral.value(d))
                } else if p.x() >= -self.iota {
                    Point::from_upper_gap(self.left_critical.value(-p.x()))
                } else {
                    Point::new(self.left_blend(p.x()).v)
                }
            }
            BranchId::Right => {
                if p.x() <= self.iota {
                    Point::from_lower_gap(self.right_critical.value(p.x()))
                } else {
                    let u = p.upper_gap();
                    if u <= self.right_neutral_gap {
                        Point::from_upper_gap(self.right_neutral.value(u))
                    } else {
                        Point::new(self.right_blend(p.x()).v)
                    }
                }
            }
        }
    }

    /// g′ at `p`.
    #[inline]
    pub fn slope(&self, p: Point) -> f64 {
        self.jet(p).d1
    }

    /// Applies the map and returns the image together with g′ at `p`.
    #[inline]
    pub fn step(&self, p: Point) -> (Point, f64) {
        (self.apply(p), self.slope(p))
    }

    fn jet(&self, p: Point) -> Jet {
        match p.branch() {
            BranchId::Left => {
                let d = p.lower_gap();
                if d <= self.left_neutral_gap {
                    self.left_neutral_jet(d)
                } else if p.x() >= -self.iota {
                    self.left_critical_jet(-p.x())
                } else {
                    self.left_blend(p.x())
                }
            }
            BranchId::Right => {
                if p.x() <= self.iota {
                    self.right_critical_jet(p.x())
                } else {
                    let u = p.upper_gap();
                    if u <= self.right_neutral_gap {
                        self.right_neutral_jet(u)
                    } else {
                        self.right_blend(p.x())
                    }
                }
            }
        }
    }

    #[inline]
    fn left_neutral_jet(&self, d: f64) -> Jet {
        let n = &self.left_neutral;
        Jet { v: -1.0 + n.value(d), d1: n.d1(d), d2: n.d2(d) }
    }

    #[inline]
    fn left_critical_jet(&self, s: f64) -> Jet {
        let c = &self.left_critical;
        Jet { v: 1.0 - c.value(s), d1: c.d1(s), d2: -c.d2(s) }
    }

    #[inline]
    fn right_critical_jet(&self, s: f64) -> Jet {
        let c = &self.right_critical;
        Jet { v: -1.0 + c.value(s), d1: c.d1(s), d2: c.d2(s) }
    }

    #[inline]
    fn right_neutral_jet(&self, u: f64) -> Jet {
        let n = &self.right_neutral;
        Jet { v: 1.0 - n.value(u), d1: n.d1(u), d2: -n.d2(u) }
    }

    fn blend(lo: Jet, hi: Jet, t: f64, width: f64) -> Jet {
        let (w, w1, w2) = smoothstep(t);
        let w1 = w1 / width;
        let w2 = w2 / (width * width);
        let diff = hi.v - lo.v;
        Jet {
            v: (1.0 - w) * lo.v + w * hi.v,
            d1: (1.0 - w) * lo.d1 + w * hi.d1 + w1 * diff,
            d2: (1.0 - w) * lo.d2 + w * hi.d2 + 2.0 * w1 * (hi.d1 - lo.d1) + w2 * diff,
        }
    }

    fn left_blend(&self, x: f64) -> Jet {
        let (a, b) = (self.junctions.u_minus1, self.junctions.u_zero_minus);
        let lo = self.left_neutral_jet(1.0 + x);
        let hi = self.left_critical_jet(-x);
        Self::blend(lo, hi, (x - a) / (b - a), b - a)
    }

    fn right_blend(&self, x: f64) -> Jet {
        let (a, b) = (self.junctions.u_zero_plus, self.junctions.u_plus1);
        let lo = self.right_critical_jet(x);
        let hi = self.right_neutral_jet(1.0 - x);
        Self::blend(lo, hi, (x - a) / (b - a), b - a)
    }

    fn side_point(x: f64, side: Option<BranchId>) -> Result<Point> {
        if !(-1.0..=1.0).contains(&x) || x.is_nan() {
            return Err(Error::DomainError { x });
        }
        if x == 0.0 {
            return match side {
                Some(BranchId::Left) => Ok(Point::new(-0.0)),
                Some(BranchId::Right) => Ok(Point::new(0.0)),
                None => Err(Error::DomainError { x }),
            };
        }
        Ok(Point::new(x))
    }

    /// g(x). At x = 0 the branch must be given.
    pub fn eval(&self, x: f64, side: Option<BranchId>) -> Result<f64> {
        Ok(self.apply(Self::side_point(x, side)?).x())
    }

    /// g′(x) (`order = 1`) or g″(x) (`order = 2`).
    pub fn deriv(&self, x: f64, order: u8, side: Option<BranchId>) -> Result<f64> {
        let p = Self::side_point(x, side)?;
        let j = self.jet(p);
        match order {
            1 => Ok(j.d1),
            2 => Ok(j.d2),
            _ => Err(Error::InvalidParams(format!("derivative order {order} not supported"))),
        }
    }

    /// Inverse of the branch `branch` at `target`, keeping endpoint distances exact.
    pub fn inverse(&self, branch: BranchId, target: Point) -> Result<Point> {
        let lg = target.lower_gap();
        let ug = target.upper_gap();
        if !(lg >= 0.0 && ug >= 0.0) {
            return Err(Error::DomainError { x: target.x() });
        }
        match branch {
            BranchId::Left => {
                if lg <= self.left_neutral.value(self.left_neutral_gap) {
                    Ok(Point::from_lower_gap(self.left_neutral.invert(lg)?))
                } else if ug <= self.right_neutral_gap {
                    let s = self.left_critical.invert(ug);
                    Ok(Point::new(-s))
                } else {
                    let y = target.x();
                    let x = solve_increasing(
                        |x| {
                            let j = self.left_blend(x);
                            (j.v - y, j.d1)
                        },
                        self.junctions.u_minus1,
                        self.junctions.u_zero_minus,
                    )?;
                    self.check_blend_residual(x, y, BranchId::Left)?;
                    Ok(Point::new(x))
                }
            }
            BranchId::Right => {
                if lg <= self.left_neutral_gap {
                    let s = self.right_critical.invert(lg);
                    Ok(Point::new(s))
                } else if ug <= self.right_neutral.value(self.right_neutral_gap) {
                    Ok(Point::from_upper_gap(self.right_neutral.invert(ug)?))
                } else {
                    let y = target.x();
                    let x = solve_increasing(
                        |x| {
                            let j = self.right_blend(x);
                            (j.v - y, j.d1)
                        },
                        self.junctions.u_zero_plus,
                        self.junctions.u_plus1,
                    )?;
                    self.check_blend_residual(x, y, BranchId::Right)?;
                    Ok(Point::new(x))
                }
            }
        }
    }

    fn check_blend_residual(&self, x: f64, y: f64, branch: BranchId) -> Result<()> {
        let v = match branch {
            BranchId::Left => self.left_blend(x).v,
            BranchId::Right => self.right_blend(x).v,
        };
        let r = (v - y).abs();
        if r > 1e-13 {
            return Err(Error::ConvergenceFailure(format!("blend inverse residual {r:e} at y = {y}")));
        }
        Ok(())
    }

    /// Inverse of a branch at a plain value `y ∈ [−1, 1]`.
    pub fn branch_inverse(&self, branch: BranchId, y: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&y) {
            return Err(Error::DomainError { x: y });
        }
        Ok(self.inverse(branch, Point::new(y))?.x())
    }

    /// Sum of log g′ over the first `n` iterates of `p`, and gⁿ(p).
    pub fn log_deriv_iterate(&self, mut p: Point, n: usize) -> (Point, f64) {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += self.slope(p).ln();
            p = self.apply(p);
        }
        (p, acc)
    }

    fn validate_shape(&self) -> Result<()> {
        let n = VALIDATION_GRID;
        for branch in [BranchId::Left, BranchId::Right] {
            for i in 0..=n {
                // Denser sampling near both ends of the branch.
                let t = i as f64 / n as f64;
                let s = 0.5 - 0.5 * (std::f64::consts::PI * t).cos();
                let p = match branch {
                    BranchId::Left => {
                        if s == 0.0 {
                            Point::from_lower_gap(1e-12)
                        } else if s == 1.0 {
                            Point::new(-1e-12)
                        } else {
                            Point::new(-1.0 + s)
                        }
                    }
                    BranchId::Right => {
                        if s == 0.0 {
                            Point::new(1e-12)
                        } else if s == 1.0 {
                            Point::from_upper_gap(1e-12)
                        } else {
                            Point::new(s)
                        }
                    }
                };
                let slope = self.slope(p);
                if !(slope > 0.0) || !slope.is_finite() {
                    return Err(Error::NonMonotone { x: p.x(), slope });
                }
                let gx = self.apply(p);
                // Next to a neutral point the increment can drop below one ulp.
                let outward = match (branch, self.region(p)) {
                    (BranchId::Left, Region::Neutral) => gx.lower_gap() >= p.lower_gap(),
                    (BranchId::Right, Region::Neutral) => gx.upper_gap() >= p.upper_gap(),
                    (BranchId::Left, _) => gx.lower_gap() > p.lower_gap(),
                    (BranchId::Right, _) => gx.upper_gap() > p.upper_gap(),
                };
                if !outward {
                    return Err(Error::SpuriousFixedPoint { x: p.x() });
                }
            }
        }
        let ends = [
            (self.apply(Point::from_lower_gap(0.0)).x(), -1.0),
            (self.apply(Point::new(-0.0)).x(), 1.0),
            (self.apply(Point::new(0.0)).x(), -1.0),
            (self.apply(Point::from_upper_gap(0.0)).x(), 1.0),
        ];
        for (got, want) in ends {
            if (got - want).abs() > 1e-10 {
                return Err(Error::RangeMismatch(format!("branch endpoint maps to {got}, expected {want}")));
            }
        }
        Ok(())
    }

    /// Computes n± and the expansion constant over δₙ± for n ≤ max(n±, 1).
    fn certify_expansion(&mut self) -> Result<()> {
        let iota = self.iota;
        const CAP: usize = 1_000_000;
        // x-sequences near ±1, y-sequences near 0.
        let mut xm = self.x0_minus;
        let mut xp = self.x0_plus;
        let mut ym = vec![self.x0_minus];
        let mut yp = vec![self.x0_plus];
        let inside_minus = |y: Point| y.x() >= -iota;
        let inside_plus = |y: Point| y.x() <= iota;
        let mut n_minus = None;
        let mut n_plus = None;
        if inside_minus(self.x0_minus) {
            n_minus = Some(0);
        }
        if inside_plus(self.x0_plus) {
            n_plus = Some(0);
        }
        // chain_m[j] = Σ_{i=1..j} log g′(xᵢ⁻), the log-derivative of gʲ along x_j⁻ → x₀⁻.
        let mut chain_m = vec![0.0];
        let mut chain_p = vec![0.0];
        let mut n = 1;
        while n_minus.is_none() || n_plus.is_none() || n <= 1 {
            if n > CAP {
                return Err(Error::RangeMismatch("n± exceeds search cap; iota too small".into()));
            }
            let next_ym = self.inverse(BranchId::Left, xp)?;
            let next_yp = self.inverse(BranchId::Right, xm)?;
            if n_minus.is_none() && inside_minus(ym[n - 1]) {
                n_minus = Some(n);
            }
            if n_plus.is_none() && inside_plus(yp[n - 1]) {
                n_plus = Some(n);
            }
            ym.push(next_ym);
            yp.push(next_yp);
            xm = self.inverse(BranchId::Left, xm)?;
            xp = self.inverse(BranchId::Right, xp)?;
            chain_m.push(chain_m[n - 1] + self.slope(xm).ln());
            chain_p.push(chain_p[n - 1] + self.slope(xp).ln());
            n += 1;
        }
        self.n_minus = n_minus.unwrap();
        self.n_plus = n_plus.unwrap();

        let mut min_log = f64::INFINITY;
        // The y-cells on one side feed the x-chain on the other.
        for (ys, chain, x0, limit) in [(&ym, &chain_p, self.x0_plus, self.n_minus), (&yp, &chain_m, self.x0_minus, self.n_plus)] {
            for depth in 1..=limit.max(1) {
                if depth > CERT_FULL_DEPTH {
                    // gᵈ maps ys[d] to x₀ and ys[d−1] to g(x₀), so the endpoint values come from the chain.
                    let inner = self.slope(ys[depth]).ln() + chain[depth - 1];
                    let outer = self.slope(ys[depth - 1]).ln() + chain[depth - 2] + self.slope(x0).ln();
                    min_log = min_log.min(inner).min(outer);
                    continue;
                }
                let (a, b) = (ys[depth - 1].x(), ys[depth].x());
                for i in 0..CERT_SAMPLES {
                    let t = (i as f64 + 0.5) / CERT_SAMPLES as f64;
                    let (_, l) = self.log_deriv_iterate(Point::new(a + t * (b - a)), depth);
                    min_log = min_log.min(l);
                }
            }
        }
        self.lambda_est = min_log.exp();
        if min_log.is_finite() && min_log.exp() <= 1.0 + 1e-9 {
            return Err(Error::ExpansionFailure { lambda: min_log.exp() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> MapModel {
        MapModel::build(MapParams::reference()).unwrap()
    }

    #[test]
    fn fixed_points_and_discontinuity() {
        let m = reference();
        assert_eq!(m.eval(-1.0, None).unwrap(), -1.0);
        assert_eq!(m.eval(1.0, None).unwrap(), 1.0);
        assert_eq!(m.eval(0.0, Some(BranchId::Left)).unwrap(), 1.0);
        assert_eq!(m.eval(0.0, Some(BranchId::Right)).unwrap(), -1.0);
        assert!(m.eval(0.0, None).is_err());
        assert!(m.eval(1.5, None).is_err());
    }

    #[test]
    fn closed_forms_on_explicit_regions() {
        let mut p = MapParams::new(1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0);
        p.iota = 0.4;
        let m = MapModel::build(p).unwrap();
        assert!(!m.iota_shrunk());
        assert!((m.eval(-0.9, None).unwrap() - (-0.89)).abs() < 1e-15);
        assert!((m.eval(0.1, None).unwrap() - (-0.99)).abs() < 1e-15);
        assert!((m.deriv(0.1, 1, None).unwrap() - 0.2).abs() < 1e-15);
        assert!((m.deriv(-1.0, 1, None).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hyperbolic_fixed_point_slope() {
        let mut p = MapParams::new(0.0, 0.5, 1.5, 1.5, 1.0, 1.0, 1.0, 1.0);
        p.xi_coeff1 = 0.3;
        let m = MapModel::build(p).unwrap();
        assert!((m.deriv(-1.0, 1, None).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn x0_minus_solves_zero_crossing() {
        let m = reference();
        let x0 = m.x0_minus().x();
        assert!(m.eval(x0, None).unwrap().abs() < 1e-13);
        assert_eq!(m.branch_inverse(BranchId::Left, 0.0).unwrap(), x0);
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let m = reference();
        for x in [-0.95, -0.6, -0.45, -0.2, 0.2, 0.45, 0.6, 0.95] {
            let h = 1e-5;
            let fd = (m.deriv(x + h, 1, None).unwrap() - m.deriv(x - h, 1, None).unwrap()) / (2.0 * h);
            let d2 = m.deriv(x, 2, None).unwrap();
            assert!((fd - d2).abs() < 1e-5 * (1.0 + d2.abs()), "x={x}: {fd} vs {d2}");
            let fd1 = (m.eval(x + h, None).unwrap() - m.eval(x - h, None).unwrap()) / (2.0 * h);
            let d1 = m.deriv(x, 1, None).unwrap();
            assert!((fd1 - d1).abs() < 1e-6 * (1.0 + d1.abs()), "x={x}: {fd1} vs {d1}");
        }
    }

    #[test]
    fn lsv_builds() {
        let m = MapModel::build(MapParams::lsv(0.5)).unwrap();
        assert_eq!(m.params().beta(), 0.5);
    }
}
