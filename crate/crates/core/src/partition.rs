//! Dynamical partition: the boundary sequences xₙ±, yₙ± and the cells δ_{m,n}.
//!
//! Δₙ⁻ = (xₙ⁻, xₙ₋₁⁻) accumulate at −1, Δₙ⁺ = (xₙ₋₁⁺, xₙ⁺) at +1, and
//! δₙ⁻ = (yₙ₋₁⁻, yₙ⁻), δₙ⁺ = (yₙ⁺, yₙ₋₁⁺) accumulate at 0 from either side.
//! Each δₘ± is further cut into δ±_{m,n}, the points whose orbit spends m
//! steps on the far side and then n steps on the near side before returning.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit;
use crate::map::MapModel;
use crate::params::MapParams;
use crate::point::{BranchId, Point};

/// Relative residual allowed for g(x_{n+1}) = xₙ and g(yₙ) = x_{n−1}.
const RECURRENCE_TOL: f64 = 1e-10;
/// Absolute residual allowed where the map is evaluated in x rather than in gaps.
const BLEND_ABS_TOL: f64 = 32.0 * f64::EPSILON;

/// Index of a cell δ±_{m,n}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CellIndex {
    pub m: usize,
    pub n: usize,
    pub side: BranchId,
}

/// Boundary sequences of a map, stored as endpoint distances.
#[derive(Debug, Clone)]
pub struct PartitionTable {
    map: Arc<MapModel>,
    n_max: usize,
    /// 1 + xₙ⁻ for n = 0..=n_max.
    x_minus_gap: Vec<f64>,
    /// 1 − xₙ⁺ for n = 0..=n_max.
    x_plus_gap: Vec<f64>,
    /// yₙ⁻ for n = 0..=n_max (y₀⁻ = x₀⁻).
    y_minus: Vec<f64>,
    /// yₙ⁺ for n = 0..=n_max (y₀⁺ = x₀⁺).
    y_plus: Vec<f64>,
}

/// Boundary distances below this are not resolved by the inverse branches.
const UNDERFLOW_GUARD: f64 = 1e-280;

impl PartitionTable {
    /// Fills all four sequences up to `n_max` by repeated branch inversion.
    pub fn compute(map: Arc<MapModel>, n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParams("n_max must be at least 1".into()));
        }
        let mut x_minus_gap = Vec::with_capacity(n_max + 1);
        let mut x_plus_gap = Vec::with_capacity(n_max + 1);
        let mut y_minus = Vec::with_capacity(n_max + 1);
        let mut y_plus = Vec::with_capacity(n_max + 1);
        let mut xm = map.x0_minus();
        let mut xp = map.x0_plus();
        x_minus_gap.push(xm.lower_gap());
        x_plus_gap.push(xp.upper_gap());
        y_minus.push(xm.x());
        y_plus.push(xp.x());
        for n in 1..=n_max {
            let smallest = xm.lower_gap().min(xp.upper_gap()).min(-y_minus[n - 1]).min(y_plus[n - 1]);
            if smallest < UNDERFLOW_GUARD {
                return Err(Error::InvalidParams(format!(
                    "n_max = {n_max} is deeper than double precision resolves for these parameters (stopped at n = {n})"
                )));
            }
            let ym = map.inverse(BranchId::Left, xp)?;
            let yp = map.inverse(BranchId::Right, xm)?;
            check_residual(&map, ym, map.apply(ym).upper_gap(), xp.upper_gap(), n, "y-")?;
            check_residual(&map, yp, map.apply(yp).lower_gap(), xm.lower_gap(), n, "y+")?;
            let next_m = map.inverse(BranchId::Left, xm)?;
            let next_p = map.inverse(BranchId::Right, xp)?;
            check_residual(&map, next_m, map.apply(next_m).lower_gap(), xm.lower_gap(), n, "x-")?;
            check_residual(&map, next_p, map.apply(next_p).upper_gap(), xp.upper_gap(), n, "x+")?;
            if !(next_m.lower_gap() < xm.lower_gap() && next_p.upper_gap() < xp.upper_gap()) {
                return Err(Error::ConvergenceFailure(format!("x-sequence stalled at n = {n}")));
            }
            if !(ym.x() > y_minus[n - 1] && yp.x() < y_plus[n - 1] && ym.x() < 0.0 && yp.x() > 0.0) {
                return Err(Error::ConvergenceFailure(format!("y-sequence stalled at n = {n}")));
            }
            xm = next_m;
            xp = next_p;
            x_minus_gap.push(xm.lower_gap());
            x_plus_gap.push(xp.upper_gap());
            y_minus.push(ym.x());
            y_plus.push(yp.x());
        }
        Ok(PartitionTable { map, n_max, x_minus_gap, x_plus_gap, y_minus, y_plus })
    }

    pub fn map(&self) -> &MapModel {
        &self.map
    }

    pub fn map_arc(&self) -> &Arc<MapModel> {
        &self.map
    }

    pub fn params(&self) -> &MapParams {
        self.map.params()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn x_minus(&self, n: usize) -> Point {
        Point::from_lower_gap(self.x_minus_gap[n])
    }

    pub fn x_plus(&self, n: usize) -> Point {
        Point::from_upper_gap(self.x_plus_gap[n])
    }

    pub fn y_minus(&self, n: usize) -> Point {
        Point::new(self.y_minus[n])
    }

    pub fn y_plus(&self, n: usize) -> Point {
        Point::new(self.y_plus[n])
    }

    /// 1 + xₙ⁻ for n = 0..=n_max.
    pub fn x_minus_gaps(&self) -> &[f64] {
        &self.x_minus_gap
    }

    /// 1 − xₙ⁺ for n = 0..=n_max.
    pub fn x_plus_gaps(&self) -> &[f64] {
        &self.x_plus_gap
    }

    /// yₙ⁻ for n = 0..=n_max.
    pub fn y_minus_values(&self) -> &[f64] {
        &self.y_minus
    }

    /// yₙ⁺ for n = 0..=n_max.
    pub fn y_plus_values(&self) -> &[f64] {
        &self.y_plus
    }

    /// Domain Δ₀ on one side as `(lo, hi)`.
    pub fn base(&self, side: BranchId) -> (Point, Point) {
        match side {
            BranchId::Left => (self.map.x0_minus(), Point::new(-0.0)),
            BranchId::Right => (Point::new(0.0), self.map.x0_plus()),
        }
    }

    /// δₘ on one side as `(lo, hi)`, 1 ≤ m ≤ n_max.
    pub fn first_level_cell(&self, side: BranchId, m: usize) -> (Point, Point) {
        match side {
            BranchId::Left => (self.y_minus(m - 1), self.y_minus(m)),
            BranchId::Right => (self.y_plus(m), self.y_plus(m - 1)),
        }
    }

    /// Pulls `p` back through g^{−m}: m−1 inverse steps on the far branch, then one on `side`.
    pub fn pullback(&self, side: BranchId, m: usize, p: Point) -> Result<Point> {
        let mut q = p;
        for _ in 1..m {
            q = self.map.inverse(side.other(), q)?;
        }
        self.map.inverse(side, q)
    }

    /// Endpoints of δ±_{m,n} as `(lo, hi)`.
    pub fn cell_interval(&self, idx: CellIndex) -> Result<(Point, Point)> {
        let CellIndex { m, n, side } = idx;
        if m == 0 || n == 0 || m > self.n_max || n > self.n_max {
            return Err(Error::IndexOutOfRange { m, n, depth: self.n_max });
        }
        match side {
            BranchId::Left => {
                let lo = self.pullback(side, m, self.y_plus(n))?;
                let hi = if n == 1 { self.y_minus(m) } else { self.pullback(side, m, self.y_plus(n - 1))? };
                Ok((lo, hi))
            }
            BranchId::Right => {
                let lo = if n == 1 { self.y_plus(m) } else { self.pullback(side, m, self.y_minus(n - 1))? };
                let hi = self.pullback(side, m, self.y_minus(n))?;
                Ok((lo, hi))
            }
        }
    }

    /// First-level index m with x ∈ δₘ on `x`'s side.
    pub fn locate_first_level(&self, x: Point) -> Option<usize> {
        let v = x.x();
        match x.branch() {
            BranchId::Left => {
                if !(v > self.y_minus[0] && v < 0.0) {
                    return None;
                }
                let idx = self.y_minus.partition_point(|&y| y <= v);
                (idx <= self.n_max && self.y_minus[idx - 1] < v).then_some(idx)
            }
            BranchId::Right => {
                if !(v < self.y_plus[0] && v > 0.0) {
                    return None;
                }
                let idx = self.y_plus.partition_point(|&y| y >= v);
                (idx <= self.n_max && self.y_plus[idx - 1] > v).then_some(idx)
            }
        }
    }

    /// Cell δ±_{m,n} containing `x ∈ Δ₀±`; `None` beyond table depth or on a boundary.
    pub fn locate_cell(&self, x: Point) -> Result<Option<CellIndex>> {
        let side = x.branch();
        let Some(m) = self.locate_first_level(x) else {
            return Ok(None);
        };
        let v = x.x();
        // Left: pullbacks of y_n⁺ decrease in n; right: pullbacks of y_n⁻ increase in n.
        let beyond = |n: usize| -> Result<bool> {
            match side {
                BranchId::Left => Ok(self.pullback(side, m, self.y_plus(n))?.x() < v),
                BranchId::Right => Ok(self.pullback(side, m, self.y_minus(n))?.x() > v),
            }
        };
        if !beyond(self.n_max)? {
            return Ok(None);
        }
        let (mut lo, mut hi) = (1usize, self.n_max);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if beyond(mid)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let n = lo;
        let (a, b) = self.cell_interval(CellIndex { m, n, side })?;
        if !(a.x() < v && v < b.x()) {
            return Ok(None);
        }
        Ok(Some(CellIndex { m, n, side }))
    }

    /// (n₋, n₊): first depth from which δₙ± ⊂ U₀±.
    pub fn n_plus_minus(&self) -> Result<(usize, usize)> {
        let iota = self.map.iota();
        let find = |ys: &[f64], inside: &dyn Fn(f64) -> bool| -> Option<usize> {
            if inside(ys[0]) {
                return Some(0);
            }
            (1..=self.n_max).find(|&n| inside(ys[n - 1]))
        };
        let nm = find(&self.y_minus, &|y| y >= -iota).ok_or_else(|| Error::NotFound("n- beyond table depth".into()))?;
        let np = find(&self.y_plus, &|y| y <= iota).ok_or_else(|| Error::NotFound("n+ beyond table depth".into()))?;
        Ok((nm, np))
    }

    /// Values sₙ of one of the sequences, for n in `lo..=hi`.
    pub fn sequence(&self, which: Sequence, lo: usize, hi: usize) -> Vec<f64> {
        (lo..=hi)
            .map(|n| match which {
                Sequence::XMinus => self.x_minus_gap[n],
                Sequence::XPlus => self.x_plus_gap[n],
                Sequence::YMinus => -self.y_minus[n],
                Sequence::YPlus => self.y_plus[n],
                Sequence::DeltaMinus => self.x_minus_gap[n - 1] - self.x_minus_gap[n],
                Sequence::DeltaPlus => self.x_plus_gap[n - 1] - self.x_plus_gap[n],
                Sequence::SmallDeltaMinus => self.y_minus[n] - self.y_minus[n - 1],
                Sequence::SmallDeltaPlus => self.y_plus[n - 1] - self.y_plus[n],
            })
            .collect()
    }

    /// Regresses a sequence over `window` (default: the last decade of indices).
    pub fn fit_asymptotics(&self, which: Sequence, window: Option<(usize, usize)>) -> Result<FitReport> {
        let (lo, hi) = match window {
            Some(w) => w,
            None => {
                if self.n_max < 1000 {
                    return Err(Error::InsufficientData(format!("default window needs n_max >= 1000, have {}", self.n_max)));
                }
                (self.n_max / 10, self.n_max)
            }
        };
        let lo = lo.max(1);
        if hi > self.n_max || hi < lo + 9 {
            return Err(Error::InsufficientData(format!("window [{lo}, {hi}] with table depth {}", self.n_max)));
        }
        let ns: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
        let vals = self.sequence(which, lo, hi);
        let theory = which.theory(self.params());
        let (exponent, constant, line) = match theory.scaling {
            Scaling::PowerLaw => fit::power_law(&ns, &vals)?,
            Scaling::Exponential => fit::exponential(&ns, &vals)?,
        };
        // Constant with the exponent pinned to its predicted value.
        let pinned_constant = {
            let logs: Vec<f64> = ns
                .iter()
                .zip(&vals)
                .map(|(n, v)| match theory.scaling {
                    Scaling::PowerLaw => v.ln() - theory.exponent * n.ln(),
                    Scaling::Exponential => v.ln() - theory.exponent * n,
                })
                .collect();
            (logs.iter().sum::<f64>() / logs.len() as f64).exp()
        };
        Ok(FitReport {
            sequence: which,
            scaling: theory.scaling,
            window: (lo, hi),
            fitted_exponent: exponent,
            fitted_constant: constant,
            pinned_constant,
            theoretical_exponent: theory.exponent,
            theoretical_constant: theory.constant,
            exponent_rel_err: (exponent / theory.exponent - 1.0).abs(),
            constant_rel_err: theory.constant.map(|c| (constant / c - 1.0).abs()),
            r_squared: line.r_squared,
        })
    }
}

fn check_residual(map: &MapModel, p: Point, got: f64, want: f64, n: usize, what: &str) -> Result<()> {
    let r = (got - want).abs();
    let floor = if map.exact_in_gaps(p) { 1e-300 } else { BLEND_ABS_TOL };
    if r > RECURRENCE_TOL * want.max(f64::MIN_POSITIVE) && r > floor {
        return Err(Error::ConvergenceFailure(format!("{what} recurrence residual {r:e} (relative {:e}) at n = {n}", r / want)));
    }
    Ok(())
}

/// The boundary sequences whose asymptotics are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    /// 1 + xₙ⁻
    XMinus,
    /// 1 − xₙ⁺
    XPlus,
    /// |yₙ⁻|
    YMinus,
    /// yₙ⁺
    YPlus,
    /// |Δₙ⁻|
    DeltaMinus,
    /// |Δₙ⁺|
    DeltaPlus,
    /// |δₙ⁻|
    SmallDeltaMinus,
    /// |δₙ⁺|
    SmallDeltaPlus,
}

impl Sequence {
    pub const ALL: [Sequence; 8] = [
        Sequence::XMinus,
        Sequence::XPlus,
        Sequence::YMinus,
        Sequence::YPlus,
        Sequence::DeltaMinus,
        Sequence::DeltaPlus,
        Sequence::SmallDeltaMinus,
        Sequence::SmallDeltaPlus,
    ];

    /// Leading-order law predicted for this sequence.
    pub fn theory(self, p: &MapParams) -> Theory {
        let power = |exponent: f64, constant: Option<f64>| Theory { scaling: Scaling::PowerLaw, exponent, constant };
        let expo = |rate: f64| Theory { scaling: Scaling::Exponential, exponent: rate, constant: None };
        match self {
            Sequence::XMinus if p.ell1 > 0.0 => power(-1.0 / p.ell1, p.c1()),
            Sequence::XMinus => expo(-(1.0 + p.b1).ln()),
            Sequence::XPlus if p.ell2 > 0.0 => power(-1.0 / p.ell2, p.c2()),
            Sequence::XPlus => expo(-(1.0 + p.b2).ln()),
            Sequence::DeltaMinus if p.ell1 > 0.0 => power(-(1.0 + 1.0 / p.ell1), p.c3()),
            Sequence::DeltaMinus => expo(-(1.0 + p.b1).ln()),
            Sequence::DeltaPlus if p.ell2 > 0.0 => power(-(1.0 + 1.0 / p.ell2), p.c4()),
            Sequence::DeltaPlus => expo(-(1.0 + p.b2).ln()),
            Sequence::YMinus if p.ell2 > 0.0 => power(-1.0 / p.beta2(), p.big_b1()),
            Sequence::YMinus => expo(-(1.0 + p.b2).ln() / p.k1),
            Sequence::YPlus if p.ell1 > 0.0 => power(-1.0 / p.beta1(), p.big_b2()),
            Sequence::YPlus => expo(-(1.0 + p.b1).ln() / p.k2),
            Sequence::SmallDeltaMinus if p.ell2 > 0.0 => power(-(1.0 + 1.0 / p.beta2()), p.big_b3()),
            Sequence::SmallDeltaMinus => expo(-(1.0 + p.b2).ln() / p.k1),
            Sequence::SmallDeltaPlus if p.ell1 > 0.0 => power(-(1.0 + 1.0 / p.beta1()), p.big_b4()),
            Sequence::SmallDeltaPlus => expo(-(1.0 + p.b1).ln() / p.k2),
        }
    }
}

/// Functional form of an asymptotic law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// sₙ ∼ c·n^p
    PowerLaw,
    /// sₙ ∼ c·e^{r n}
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theory {
    pub scaling: Scaling,
    /// Power p or rate r.
    pub exponent: f64,
    pub constant: Option<f64>,
}

/// Fitted against predicted asymptotics of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitReport {
    pub sequence: Sequence,
    pub scaling: Scaling,
    pub window: (usize, usize),
    pub fitted_exponent: f64,
    pub fitted_constant: f64,
    pub pinned_constant: f64,
    pub theoretical_exponent: f64,
    pub theoretical_constant: Option<f64>,
    pub exponent_rel_err: f64,
    pub constant_rel_err: Option<f64>,
    pub r_squared: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize) -> PartitionTable {
        let map = Arc::new(MapModel::build(MapParams::reference()).unwrap());
        PartitionTable::compute(map, n).unwrap()
    }

    #[test]
    fn first_entries_satisfy_definitions() {
        let t = table(50);
        let map = t.map();
        assert_eq!(t.x_minus(0), map.x0_minus());
        let g = map.apply(t.y_minus(1));
        assert!((g.x() - t.x_plus(0).x()).abs() < 1e-12);
    }

    #[test]
    fn cells_nest_in_first_level() {
        let t = table(50);
        for (m, n) in [(1, 1), (2, 3), (5, 1), (3, 7)] {
            for side in [BranchId::Left, BranchId::Right] {
                let (a, b) = t.cell_interval(CellIndex { m, n, side }).unwrap();
                let (c, d) = t.first_level_cell(side, m);
                assert!(a.x() < b.x());
                assert!(c.x() <= a.x() && b.x() <= d.x(), "{side:?} ({m},{n})");
            }
        }
    }

    #[test]
    fn cells_tile_first_level() {
        let t = table(200);
        let m = 3;
        let mut prev_lo = t.y_minus(m).x();
        for n in 1..=20 {
            let (lo, hi) = t.cell_interval(CellIndex { m, n, side: BranchId::Left }).unwrap();
            assert_eq!(hi.x(), prev_lo);
            prev_lo = lo.x();
        }
    }

    #[test]
    fn locate_round_trip() {
        let t = table(200);
        for (m, n) in [(1, 1), (2, 3), (4, 9), (10, 2)] {
            for side in [BranchId::Left, BranchId::Right] {
                let (a, b) = t.cell_interval(CellIndex { m, n, side }).unwrap();
                let mid = Point::new(0.5 * (a.x() + b.x()));
                assert_eq!(t.locate_cell(mid).unwrap(), Some(CellIndex { m, n, side }));
            }
        }
    }

    #[test]
    fn out_of_range_index() {
        let t = table(10);
        assert!(t.cell_interval(CellIndex { m: 11, n: 1, side: BranchId::Left }).is_err());
        assert!(t.cell_interval(CellIndex { m: 0, n: 1, side: BranchId::Left }).is_err());
    }

    #[test]
    fn n_plus_minus_matches_model() {
        let t = table(20);
        let map = t.map();
        assert_eq!(t.n_plus_minus().unwrap(), (map.n_minus(), map.n_plus()));
    }

    #[test]
    fn cells_stay_inside_u0_after_n_pm() {
        let t = table(300);
        let (nm, np) = t.n_plus_minus().unwrap();
        let iota = t.map().iota();
        for n in nm.max(1)..=300 {
            assert!(t.y_minus(n - 1).x() >= -iota);
        }
        for n in np.max(1)..=300 {
            assert!(t.y_plus(n - 1).x() <= iota);
        }
    }
}
