//! First-return maps to Δ₀± and their expansion and distortion properties.
//!
//! Starting in Δ₀⁻ the orbit first jumps next to +1, creeps towards 0⁺ for
//! τ⁺ steps in total, jumps next to −1 and creeps back for τ⁻ steps. For
//! x ∈ δ⁻_{m,n} this gives τ⁺ = m and τ⁻ = n (iterates 1..=τ counted on
//! each side, the return point included).

use rand::Rng;
use serde::Serialize;

use crate::check::CheckReport;
use crate::error::{Error, Result};
use crate::map::MapModel;
use crate::measure::DensityEstimate;
use crate::partition::{CellIndex, PartitionTable, Scaling, Sequence};
use crate::point::{BranchId, Point};

/// Iteration cap for a single excursion.
pub const RETURN_BUDGET: u64 = 10_000_000;

/// One excursion from Δ₀ back to Δ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnRecord {
    pub x: f64,
    /// G(x) = g^τ(x).
    pub gx: f64,
    pub tau: u64,
    /// Iterates 1..=τ lying in I₊.
    pub tau_plus: u64,
    /// Iterates 1..=τ lying in I₋.
    pub tau_minus: u64,
    /// log G′(x), accumulated along the orbit.
    pub log_deriv: f64,
    /// Cell implied by the orbit: (τ⁺, τ⁻) from Δ₀⁻, (τ⁻, τ⁺) from Δ₀⁺.
    pub cell: CellIndex,
    #[serde(skip)]
    pub image: Point,
}

impl ReturnRecord {
    /// G′(x); may overflow to infinity for very long excursions.
    pub fn deriv(&self) -> f64 {
        self.log_deriv.exp()
    }

    /// a·τ⁺ + b·τ⁻.
    pub fn tau_ab(&self, a: f64, b: f64) -> f64 {
        a * self.tau_plus as f64 + b * self.tau_minus as f64
    }
}

/// True when `p` lies in the open base interval Δ₀ on `side`.
#[inline]
pub fn in_base(map: &MapModel, side: BranchId, p: Point) -> bool {
    match side {
        BranchId::Left => p.x() < 0.0 && p.x() > map.x0_minus().x(),
        BranchId::Right => p.x() > 0.0 && p.x() < map.x0_plus().x(),
    }
}

fn on_base_boundary(map: &MapModel, p: Point) -> bool {
    p.x() == 0.0 || p.x() == map.x0_minus().x() || p.x() == map.x0_plus().x()
}

/// Iterates `x ∈ Δ₀±` until it re-enters the same base interval.
pub fn first_return(map: &MapModel, x: Point) -> Result<ReturnRecord> {
    match capped_return(map, x, RETURN_BUDGET)? {
        Excursion::Returned(r) => Ok(r),
        Excursion::Censored { .. } => Err(Error::BudgetExceeded { x: x.x(), steps: RETURN_BUDGET }),
    }
}

/// Outcome of an excursion followed for at most a fixed number of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Excursion {
    Returned(ReturnRecord),
    /// Still away from the base after `cap` steps; counts so far.
    Censored {
        tau_plus: u64,
        tau_minus: u64,
    },
}

/// Like [`first_return`], but stops after `cap` steps.
pub fn capped_return(map: &MapModel, x: Point, cap: u64) -> Result<Excursion> {
    let side = x.branch();
    if !in_base(map, side, x) {
        return Err(Error::DomainError { x: x.x() });
    }
    let mut p = x;
    let mut log_deriv = 0.0;
    let mut plus = 0u64;
    let mut minus = 0u64;
    for step in 1..=cap {
        log_deriv += map.slope(p).ln();
        p = map.apply(p);
        if on_base_boundary(map, p) {
            return Err(Error::BoundaryHit { x: x.x() });
        }
        match p.branch() {
            BranchId::Left => minus += 1,
            BranchId::Right => plus += 1,
        }
        if in_base(map, side, p) {
            let (m, n) = match side {
                BranchId::Left => (plus, minus),
                BranchId::Right => (minus, plus),
            };
            return Ok(Excursion::Returned(ReturnRecord {
                x: x.x(),
                gx: p.x(),
                tau: step,
                tau_plus: plus,
                tau_minus: minus,
                log_deriv,
                cell: CellIndex { m: m as usize, n: n as usize, side },
                image: p,
            }));
        }
    }
    Ok(Excursion::Censored { tau_plus: plus, tau_minus: minus })
}

/// φ = (g|U₀₊)⁻¹ ∘ g|U₋₁ ∘ g|U₀₊, defined where all three closed forms apply.
pub fn phi_map(map: &MapModel, x: f64) -> Result<f64> {
    let iota = map.iota();
    if !(x > 0.0 && x < iota) {
        return Err(Error::DomainError { x });
    }
    let crit = map.right_critical();
    let neutral = map.left_neutral();
    let gap = crit.value(x);
    let gap2 = neutral.value(gap);
    // g²(x) must lie in g(U₀₊) = U₋₁.
    if gap2 >= crit.value(iota) {
        return Err(Error::DomainError { x });
    }
    Ok(crit.invert(gap2))
}

/// Pointwise check of (g²)′(x) > g′(φ(x)) on δ_{n+1}⁺, plus min G′ over random points.
pub fn expansion_check<R: Rng>(
    table: &PartitionTable,
    n_range: (usize, usize),
    samples_per_cell: usize,
    random_points: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    let map = table.map();
    let (lo, hi) = n_range;
    if hi + 1 > table.n_max() {
        return Err(Error::IndexOutOfRange { m: hi + 1, n: 0, depth: table.n_max() });
    }
    let mut violations = 0;
    let mut transfer_violations = 0;
    let mut samples = 0;
    let mut min_ratio = f64::INFINITY;
    for n in lo..=hi {
        let (a, b) = table.first_level_cell(BranchId::Right, n + 1);
        for i in 0..samples_per_cell {
            let t = (i as f64 + 0.5) / samples_per_cell as f64;
            let x = Point::new(a.x() + t * (b.x() - a.x()));
            let phi = Point::new(phi_map(map, x.x())?);
            let lhs = map.slope(x) * map.slope(map.apply(x));
            let rhs = map.slope(phi);
            samples += 1;
            if !(lhs > rhs) {
                violations += 1;
            }
            min_ratio = min_ratio.min(lhs / rhs);
            // (G̃⁺)′ at x (n+1 steps) against (G̃⁺)′ at φ(x) (n steps).
            let (_, lx) = map.log_deriv_iterate(x, n + 1);
            let (_, lp) = map.log_deriv_iterate(phi, n);
            if !(lx > lp) {
                transfer_violations += 1;
            }
        }
    }

    let (x0, _) = table.base(BranchId::Left);
    let mut min_log_g = f64::INFINITY;
    for _ in 0..random_points {
        let x = Point::new(rng.gen_range(x0.x()..0.0));
        if !in_base(map, BranchId::Left, x) {
            continue;
        }
        let r = first_return(map, x)?;
        min_log_g = min_log_g.min(r.log_deriv);
    }
    let min_g = min_log_g.exp();
    let mut report = CheckReport::new("expansion");
    report.samples = samples;
    report.violations = violations + transfer_violations;
    report.passed = violations == 0 && transfer_violations == 0 && min_g > 1.0;
    report.statistic = min_g;
    Ok(report
        .detail("lemma_violations", violations as f64)
        .detail("transfer_violations", transfer_violations as f64)
        .detail("min_ratio", min_ratio)
        .detail("min_induced_derivative", min_g)
        .detail("lambda_est", map.lambda_est()))
}

/// Distortion constants per cell depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub side: BranchId,
    /// (depth n, D̂ₙ).
    pub per_depth: Vec<(usize, f64)>,
    pub finite: bool,
}

impl DistortionReport {
    pub fn at(&self, depth: usize) -> Option<f64> {
        self.per_depth.iter().find(|(d, _)| *d == depth).map(|(_, v)| *v)
    }

    /// |D̂(a)/D̂(b) − 1|.
    pub fn relative_change(&self, a: usize, b: usize) -> Option<f64> {
        Some((self.at(a)? / self.at(b)? - 1.0).abs())
    }
}

/// Smallest D̂ with |log (g^{n−m})′(g^m x) − log (g^{n−m})′(g^m y)| ≤ D̂·|gⁿx − gⁿy|.
///
/// Points are placed by pulling back `points_per_cell` evenly spaced image
/// points through the inverse branches of δₙ, so every pair shares a cell.
/// All pairs and all 0 ≤ m < n are scanned.
pub fn distortion_check(
    table: &PartitionTable,
    side: BranchId,
    depths: &[usize],
    points_per_cell: usize,
) -> Result<DistortionReport> {
    let map = table.map();
    let (img_lo, img_hi) = table.base(side.other());
    let mut per_depth = Vec::with_capacity(depths.len());
    for &n in depths {
        if n == 0 || n > table.n_max() {
            return Err(Error::IndexOutOfRange { m: n, n: 0, depth: table.n_max() });
        }
        let mut images = Vec::with_capacity(points_per_cell);
        // suffix[i][m] = Σ_{j ≥ m} log g′ along the chain of point i.
        let mut suffix: Vec<Vec<f64>> = Vec::with_capacity(points_per_cell);
        for i in 0..points_per_cell {
            let t = (i as f64 + 0.5) / points_per_cell as f64;
            let u = Point::new(img_lo.x() + t * (img_hi.x() - img_lo.x()));
            let mut chain = vec![u];
            let mut q = u;
            for _ in 1..n {
                q = map.inverse(side.other(), q)?;
                chain.push(q);
            }
            chain.push(map.inverse(side, q)?);
            chain.reverse();
            let mut s = vec![0.0; n + 1];
            for j in (0..n).rev() {
                s[j] = s[j + 1] + map.slope(chain[j]).ln();
            }
            images.push(u.x());
            suffix.push(s);
        }
        let mut d_hat: f64 = 0.0;
        for i in 0..points_per_cell {
            for k in (i + 1)..points_per_cell {
                let sep = (images[i] - images[k]).abs();
                for (a, b) in suffix[i].iter().zip(&suffix[k]).take(n) {
                    d_hat = d_hat.max((a - b).abs() / sep);
                }
            }
        }
        per_depth.push((n, d_hat));
    }
    let finite = per_depth.iter().all(|(_, d)| d.is_finite());
    Ok(DistortionReport { side, per_depth, finite })
}

/// Bounded distortion of G in terms of separation time.
///
/// For nearby pairs in Δ₀⁻, s(x, y) is the number of G-steps taken in a
/// common cell. Reports the largest K = |log G′(x) − log G′(y)|·λ^{s−1}
/// over pairs, with λ the smallest sampled G′.
pub fn separation_check<R: Rng>(map: &MapModel, pairs: usize, max_steps: usize, rng: &mut R) -> Result<CheckReport> {
    let x0 = map.x0_minus().x();
    let mut lambda_log = f64::INFINITY;
    let mut records = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let x = Point::new(rng.gen_range(x0..0.0));
        let eps = 10f64.powf(rng.gen_range(-12.0..-4.0));
        let y = Point::new((x.x() + eps).min(-1e-300));
        if !in_base(map, BranchId::Left, x) || !in_base(map, BranchId::Left, y) {
            continue;
        }
        let rx = first_return(map, x)?;
        let ry = first_return(map, y)?;
        lambda_log = lambda_log.min(rx.log_deriv).min(ry.log_deriv);
        if rx.cell != ry.cell {
            continue;
        }
        // Count further common-cell steps.
        let mut s = 1usize;
        let (mut px, mut py) = (rx.image, ry.image);
        while s < max_steps {
            let (a, b) = match (first_return(map, px), first_return(map, py)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => break,
            };
            if a.cell != b.cell {
                break;
            }
            s += 1;
            px = a.image;
            py = b.image;
        }
        records.push(((rx.log_deriv - ry.log_deriv).abs(), s));
    }
    let mut k_max: f64 = 0.0;
    for (diff, s) in &records {
        k_max = k_max.max(diff * (lambda_log * (*s as f64 - 1.0)).exp());
    }
    let mut report = CheckReport::new("separation_distortion");
    report.samples = records.len();
    report.statistic = k_max;
    report.passed = k_max.is_finite();
    Ok(report.detail("lambda", lambda_log.exp()))
}

/// Samples `x ∈ Δ₀⁻` uniformly and checks each excursion against a separate
/// brute-force iteration (no intermediate iterate in Δ₀⁻, G(x) = g^τ(x)) and,
/// when x lies within the table depth, against its cell: τ⁺ = m, τ⁻ = n.
pub fn return_check<R: Rng>(table: &PartitionTable, samples: usize, rng: &mut R) -> Result<CheckReport> {
    let map = table.map();
    let x0 = map.x0_minus().x();
    let (mut failures, mut unlocated, mut checked) = (0usize, 0usize, 0usize);
    let mut max_image_err: f64 = 0.0;
    let mut max_tau = 0u64;
    for _ in 0..samples {
        let x = loop {
            let x = Point::new(rng.gen_range(x0..0.0));
            if in_base(map, BranchId::Left, x) {
                break x;
            }
        };
        let r = first_return(map, x)?;
        max_tau = max_tau.max(r.tau);
        let mut ok = r.tau == r.tau_plus + r.tau_minus;
        match table.locate_cell(x)? {
            Some(cell) => {
                checked += 1;
                ok &= r.tau == (cell.m + cell.n) as u64
                    && r.tau_plus == cell.m as u64
                    && r.tau_minus == cell.n as u64
                    && r.cell == cell;
            }
            None => unlocated += 1,
        }
        let mut p = x;
        for i in 1..=r.tau {
            p = map.apply(p);
            if i < r.tau && in_base(map, BranchId::Left, p) {
                ok = false;
            }
        }
        ok &= in_base(map, BranchId::Left, p);
        max_image_err = max_image_err.max((p.x() - r.gx).abs());
        ok &= (p.x() - r.gx).abs() <= 1e-10;
        if !ok {
            failures += 1;
        }
    }
    let mut report = CheckReport::new("first_return");
    report.samples = samples;
    report.violations = failures;
    report.statistic = max_image_err;
    report.passed = failures == 0 && checked > 0;
    Ok(report
        .detail("located", checked as f64)
        .detail("unlocated", unlocated as f64)
        .detail("max_image_error", max_image_err)
        .detail("max_tau", max_tau as f64))
}

/// Leading-order size of δₙ on one side, without its constant.
fn cell_law(table: &PartitionTable, which: Sequence, n: usize) -> f64 {
    let t = which.theory(table.params());
    match t.scaling {
        Scaling::PowerLaw => (n as f64).powf(t.exponent),
        Scaling::Exponential => (t.exponent * n as f64).exp(),
    }
}

/// Ratios μ̃(δ⁻_{i,j}) / (|δᵢ⁻|-law · |δⱼ⁺|-law) for i, j ≤ `ij_max`. The
/// statistic is K = sup of the ratio; `stability` compares K over [1, R] for
/// the last two dyadic R.
pub fn cell_measure_bound_check(table: &PartitionTable, density: &DensityEstimate, ij_max: usize) -> Result<CheckReport> {
    if ij_max < 4 || ij_max > table.n_max() {
        return Err(Error::IndexOutOfRange { m: ij_max, n: ij_max, depth: table.n_max() });
    }
    let h = density.on_minus();
    let mut ratio = vec![vec![0.0; ij_max + 1]; ij_max + 1];
    for (i, row) in ratio.iter_mut().enumerate().skip(1) {
        for (j, r) in row.iter_mut().enumerate().skip(1) {
            let (a, b) = table.cell_interval(CellIndex { m: i, n: j, side: BranchId::Left })?;
            let law = cell_law(table, Sequence::SmallDeltaMinus, i) * cell_law(table, Sequence::SmallDeltaPlus, j);
            *r = h.mass(a.x(), b.x()) / law;
        }
    }
    let sup_upto = |r: usize| ratio[1..=r].iter().flat_map(|row| row[1..=r].iter().copied()).fold(0.0, f64::max);
    let mut dyadic = Vec::new();
    let mut r = 2;
    while r <= ij_max {
        dyadic.push(r);
        r *= 2;
    }
    let k = sup_upto(ij_max);
    let last = *dyadic.last().unwrap();
    let prev = dyadic[dyadic.len() - 2];
    let stability = (sup_upto(last) / sup_upto(prev) - 1.0).abs();
    let mut report = CheckReport::new("cell_measure_bound");
    report.samples = ij_max * ij_max;
    report.statistic = k;
    report.passed = k.is_finite() && k > 0.0;
    report = report.detail("stability", stability);
    for r in dyadic {
        report = report.detail(format!("sup_upto_{r}"), sup_upto(r));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::MapParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn table(n: usize) -> PartitionTable {
        let map = Arc::new(MapModel::build(MapParams::reference()).unwrap());
        PartitionTable::compute(map, n).unwrap()
    }

    #[test]
    fn shallow_cell_returns_in_two_steps() {
        let t = table(50);
        let (a, b) = t.cell_interval(CellIndex { m: 1, n: 1, side: BranchId::Left }).unwrap();
        let r = first_return(t.map(), Point::new(0.5 * (a.x() + b.x()))).unwrap();
        assert_eq!(r.tau, 2);
        assert_eq!((r.tau_plus, r.tau_minus), (1, 1));
    }

    #[test]
    fn cell_two_three() {
        let t = table(50);
        let (a, b) = t.cell_interval(CellIndex { m: 2, n: 3, side: BranchId::Left }).unwrap();
        let x = Point::new(0.5 * (a.x() + b.x()));
        let r = first_return(t.map(), x).unwrap();
        assert_eq!(r.tau, 5);
        assert_eq!((r.tau_plus, r.tau_minus), (2, 3));
        assert_eq!(r.tau_ab(1.0, -1.0), -1.0);
        let (gx, _) = t.map().log_deriv_iterate(x, 5);
        assert!((gx.x() - r.gx).abs() < 1e-10);
        // Endpoints land on the ends of Δ₀⁻.
        let (ga, _) = t.map().log_deriv_iterate(a, 5);
        let (gb, _) = t.map().log_deriv_iterate(b, 5);
        assert!((ga.x() - t.map().x0_minus().x()).abs() < 1e-8);
        assert!(gb.x().abs() < 1e-8);
    }

    #[test]
    fn right_side_returns() {
        let t = table(50);
        let (a, b) = t.cell_interval(CellIndex { m: 3, n: 2, side: BranchId::Right }).unwrap();
        let r = first_return(t.map(), Point::new(0.5 * (a.x() + b.x()))).unwrap();
        assert_eq!(r.cell, CellIndex { m: 3, n: 2, side: BranchId::Right });
        assert_eq!((r.tau_minus, r.tau_plus), (3, 2));
    }

    #[test]
    fn phi_closed_form() {
        let t = table(300);
        let map = t.map();
        let (k, a, b, l) = (1.5f64, 1.0f64, 1.0f64, 0.5f64);
        for n in [5usize, 20, 100] {
            let (lo, hi) = t.first_level_cell(BranchId::Right, n + 1);
            let x = 0.5 * (lo.x() + hi.x());
            let phi = phi_map(map, x).unwrap();
            let closed = (x.powf(k) + b * a.powf(l) * x.powf(k * (l + 1.0))).powf(1.0 / k);
            assert!((phi - closed).abs() < 1e-12 * closed);
            let g_phi = map.apply(Point::new(phi));
            let g2 = map.apply(map.apply(Point::new(x)));
            assert!((g_phi.x() - g2.x()).abs() < 1e-10);
            let (plo, phi_hi) = t.first_level_cell(BranchId::Right, n);
            assert!(plo.x() < phi && phi < phi_hi.x());
        }
    }

    #[test]
    fn expansion_holds_on_reference() {
        let t = table(300);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = expansion_check(&t, (3, 60), 10, 200, &mut rng).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn distortion_degenerate_pair() {
        let t = table(60);
        let r = distortion_check(&t, BranchId::Right, &[5, 10], 2).unwrap();
        assert!(r.finite);
    }
}
