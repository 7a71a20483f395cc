//! Ulam approximation of the induced invariant density and the spread measure.
//!
//! The first-return map G on Δ₀⁻ factors as G = G̃⁺ ∘ G̃⁻, where
//! G̃⁻ = g^m on δₘ⁻ carries Δ₀⁻ onto Δ₀⁺ and G̃⁺ = gⁿ on δₙ⁺ carries Δ₀⁺
//! back onto Δ₀⁻. Each factor is discretised separately: preimages of the
//! target bin edges are computed exactly through the inverse branches, so
//! the entry (i, j) is the Lebesgue measure of bin i ∩ G̃⁻¹(bin j) divided
//! by |bin i|. The Ulam matrix of G is the product of the two factors.

mod constants;
mod spread;

pub use constants::*;
pub use spread::*;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit;
use crate::partition::PartitionTable;
use crate::point::{BranchId, Point};

/// Bins used for the linear extrapolation of the density at 0.
pub const ZERO_FIT_BINS: usize = 16;
/// Power-iteration sweep cap.
pub const MAX_SWEEPS: usize = 10_000;
/// Target ℓ¹ residual of the power iteration.
pub const SWEEP_TOL: f64 = 1e-12;
/// Escaped Lebesgue fraction above which construction fails.
pub const MAX_ESCAPE: f64 = 0.01;

/// Row-stochastic sparse matrix stored by rows.
#[derive(Debug, Clone)]
pub struct SparseRows {
    rows: Vec<Vec<(u32, f64)>>,
    cols: usize,
}

impl SparseRows {
    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// out = v·P.
    pub fn left_mul(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &vi) in self.rows.iter().zip(v) {
            if vi == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j as usize] += vi * p;
            }
        }
    }

    /// Largest |row sum − 1|.
    pub fn max_row_defect(&self) -> f64 {
        self.rows.iter().map(|r| (r.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.rows.iter().flat_map(|r| r.iter().map(|(_, p)| *p)).fold(f64::INFINITY, f64::min)
    }
}

/// Uniform bin edges on `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut e: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    e[0] = lo;
    e[bins] = hi;
    e
}

/// Discretisation of one half-excursion map Δ₀^source → Δ₀^target.
#[derive(Debug, Clone)]
pub struct UlamFactor {
    pub source: BranchId,
    pub source_edges: Vec<f64>,
    pub target_edges: Vec<f64>,
    pub matrix: SparseRows,
    /// Lebesgue fraction of the source base lying beyond the last included cell.
    pub escaped_lebesgue: f64,
    /// Largest relative gap between a row's raw mass and its bin width.
    pub max_mass_defect: f64,
}

impl UlamFactor {
    /// Builds the factor from cells δₘ^source, m ≤ `m_max`.
    pub fn build(table: &PartitionTable, source: BranchId, source_bins: usize, target_bins: usize, m_max: usize) -> Result<Self> {
        if m_max == 0 || m_max > table.n_max() {
            return Err(Error::InvalidParams(format!(
                "m_max = {m_max} needs a partition table of at least that depth (have {})",
                table.n_max()
            )));
        }
        let map = table.map();
        let (s_lo, s_hi) = table.base(source);
        let (t_lo, t_hi) = table.base(source.other());
        let source_edges = uniform_edges(s_lo.x(), s_hi.x(), source_bins);
        let target_edges = uniform_edges(t_lo.x(), t_hi.x(), target_bins);

        // pre[j][m-1] = preimage in δₘ of the interior target edge j.
        let interior: Vec<Point> = target_edges[1..target_bins].iter().map(|&e| Point::new(e)).collect();
        let pre: Vec<Vec<f64>> = interior
            .par_iter()
            .map(|&edge| -> Result<Vec<f64>> {
                let mut out = Vec::with_capacity(m_max);
                let mut q = edge;
                for m in 1..=m_max {
                    if m > 1 {
                        q = map.inverse(source.other(), q)?;
                    }
                    out.push(map.inverse(source, q)?.x());
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;

        let mut raw: Vec<Vec<(u32, f64)>> = vec![Vec::new(); source_bins];
        let mut cuts = vec![0.0; target_bins + 1];
        let mut profile = vec![0.0; target_bins];
        for m in 1..=m_max {
            let (lo, hi) = table.first_level_cell(source, m);
            cuts[0] = lo.x();
            cuts[target_bins] = hi.x();
            for j in 1..target_bins {
                cuts[j] = pre[j - 1][m - 1];
            }
            for j in 0..target_bins {
                if !(cuts[j + 1] >= cuts[j]) {
                    return Err(Error::ConvergenceFailure(format!("preimages out of order in cell {m}")));
                }
            }
            sweep(&source_edges, &cuts, &mut raw);
            if m == m_max {
                let width = hi.x() - lo.x();
                for j in 0..target_bins {
                    profile[j] = (cuts[j + 1] - cuts[j]) / width;
                }
            }
        }

        // Region beyond the last cell: redistribute with the deepest cell's profile.
        let (tail_lo, tail_hi) = match source {
            BranchId::Left => (table.y_minus(m_max).x(), s_hi.x()),
            BranchId::Right => (s_lo.x(), table.y_plus(m_max).x()),
        };
        let escaped_lebesgue = (tail_hi - tail_lo) / (s_hi.x() - s_lo.x());
        if escaped_lebesgue > MAX_ESCAPE {
            return Err(Error::TruncationTooSmall { escaped: escaped_lebesgue });
        }
        for (i, row) in raw.iter_mut().enumerate() {
            let overlap = source_edges[i + 1].min(tail_hi) - source_edges[i].max(tail_lo);
            if overlap > 0.0 {
                for (j, &w) in profile.iter().enumerate() {
                    if w > 0.0 {
                        row.push((j as u32, overlap * w));
                    }
                }
            }
        }

        let mut max_mass_defect: f64 = 0.0;
        let rows: Vec<Vec<(u32, f64)>> = raw
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.sort_by_key(|(j, _)| *j);
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
                for (j, v) in row {
                    match merged.last_mut() {
                        Some((lj, lv)) if *lj == j => *lv += v,
                        _ => merged.push((j, v)),
                    }
                }
                let total: f64 = merged.iter().map(|(_, v)| v).sum();
                let width = source_edges[i + 1] - source_edges[i];
                max_mass_defect = max_mass_defect.max((total / width - 1.0).abs());
                for (_, v) in merged.iter_mut() {
                    *v /= total;
                }
                merged
            })
            .collect();
        Ok(UlamFactor {
            source,
            source_edges,
            target_edges,
            matrix: SparseRows { rows, cols: target_bins },
            escaped_lebesgue,
            max_mass_defect,
        })
    }
}

/// Adds |bin i ∩ [cuts[j], cuts[j+1]]| to `rows[i]` at column `j`.
fn sweep(edges: &[f64], cuts: &[f64], rows: &mut [Vec<(u32, f64)>]) {
    let bins = edges.len() - 1;
    let segs = cuts.len() - 1;
    let lo = cuts[0];
    let mut i = edges.partition_point(|&e| e <= lo).saturating_sub(1).min(bins - 1);
    let mut j = 0;
    while i < bins && j < segs {
        let a = edges[i].max(cuts[j]);
        let b = edges[i + 1].min(cuts[j + 1]);
        if b > a {
            rows[i].push((j as u32, b - a));
        }
        if edges[i + 1] <= cuts[j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
}

/// Ulam operator of the first-return map to Δ₀ on one side, held as two factors.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    pub side: BranchId,
    /// Δ₀^side → Δ₀^other.
    pub forward: UlamFactor,
    /// Δ₀^other → Δ₀^side.
    pub back: UlamFactor,
    pub truncation: usize,
}

impl UlamOperator {
    /// Builds the operator with `bins` on Δ₀^side and `companion_bins` on the opposite base.
    pub fn build(table: &PartitionTable, side: BranchId, bins: usize, companion_bins: usize, m_max: usize) -> Result<Self> {
        if bins < 2 * ZERO_FIT_BINS || companion_bins < 2 * ZERO_FIT_BINS {
            return Err(Error::InvalidParams(format!("need at least {} bins", 2 * ZERO_FIT_BINS)));
        }
        let forward = UlamFactor::build(table, side, bins, companion_bins, m_max)?;
        let back = UlamFactor::build(table, side.other(), companion_bins, bins, m_max)?;
        Ok(UlamOperator { side, forward, back, truncation: m_max })
    }

    pub fn bins(&self) -> usize {
        self.forward.matrix.rows()
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.forward.source_edges
    }

    pub fn escaped_lebesgue(&self) -> f64 {
        self.forward.escaped_lebesgue.max(self.back.escaped_lebesgue)
    }

    /// v·P for the composite operator.
    pub fn apply(&self, v: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.forward.matrix.left_mul(v, scratch);
        self.back.matrix.left_mul(scratch, out);
    }

    /// Dense composite matrix; intended for small operators and tests.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.bins();
        let mut scratch = vec![0.0; self.forward.matrix.cols()];
        let mut out = vec![0.0; n];
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                self.apply(&e, &mut scratch, &mut out);
                out.clone()
            })
            .collect()
    }

    /// Left fixed vector by power iteration, converted to densities.
    pub fn stationary_density(&self) -> Result<DensityEstimate> {
        let edges = self.bin_edges();
        let n = self.bins();
        let total = edges[n] - edges[0];
        let mut v: Vec<f64> = (0..n).map(|i| (edges[i + 1] - edges[i]) / total).collect();
        let mut scratch = vec![0.0; self.forward.matrix.cols()];
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        let mut sweeps = 0;
        while sweeps < MAX_SWEEPS {
            self.apply(&v, &mut scratch, &mut next);
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= s);
            residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut v, &mut next);
            sweeps += 1;
            if residual <= SWEEP_TOL {
                break;
            }
        }
        if residual > SWEEP_TOL {
            return Err(Error::NonConvergence { iterations: sweeps, residual });
        }
        // Residual of the returned vector itself.
        self.apply(&v, &mut scratch, &mut next);
        let residual: f64 = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        let mut companion_mass = vec![0.0; self.forward.matrix.cols()];
        self.forward.matrix.left_mul(&v, &mut companion_mass);

        let primary = PiecewiseDensity::from_masses(edges.to_vec(), &v);
        let companion = PiecewiseDensity::from_masses(self.forward.target_edges.clone(), &companion_mass);
        let (left, right) = match self.side {
            BranchId::Left => (&primary, &companion),
            BranchId::Right => (&companion, &primary),
        };
        let h_at_zero_minus = left.extrapolate_at(0.0, false)?;
        let h_at_zero_plus = right.extrapolate_at(0.0, true)?;
        let escaped_mass = self.escaped_mass(&primary, &companion);
        Ok(DensityEstimate {
            side: self.side,
            lipschitz_est: primary.lipschitz(),
            primary,
            companion,
            h_at_zero_minus,
            h_at_zero_plus,
            residual,
            sweeps,
            escaped_mass,
        })
    }

    fn escaped_mass(&self, primary: &PiecewiseDensity, companion: &PiecewiseDensity) -> f64 {
        let cut = |f: &UlamFactor, d: &PiecewiseDensity| -> f64 {
            let e = &f.source_edges;
            let width = (e[e.len() - 1] - e[0]) * f.escaped_lebesgue;
            match f.source {
                BranchId::Left => d.mass(e[e.len() - 1] - width, e[e.len() - 1]),
                BranchId::Right => d.mass(e[0], e[0] + width),
            }
        };
        cut(&self.forward, primary).max(cut(&self.back, companion))
    }
}

/// Piecewise-constant probability density on a binned interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseDensity {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
    /// Cumulative mass at each edge.
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl PiecewiseDensity {
    pub fn from_masses(edges: Vec<f64>, masses: &[f64]) -> Self {
        let total: f64 = masses.iter().sum();
        let values = masses.iter().enumerate().map(|(i, m)| m / total / (edges[i + 1] - edges[i])).collect();
        let mut cdf = Vec::with_capacity(edges.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for m in masses {
            acc += m / total;
            cdf.push(acc);
        }
        PiecewiseDensity { edges, values, cdf }
    }

    pub fn bins(&self) -> usize {
        self.values.len()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin index containing `x` (clamped).
    pub fn bin_of(&self, x: f64) -> usize {
        self.edges.partition_point(|&e| e <= x).saturating_sub(1).min(self.bins() - 1)
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.values[self.bin_of(x)]
    }

    /// Cumulative mass up to `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let i = self.bin_of(x);
        self.cdf[i] + self.values[i] * (x - self.edges[i])
    }

    /// Mass of (a, b).
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        (self.cdf_at(b) - self.cdf_at(a)).max(0.0)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().zip(self.edges.windows(2)).map(|(v, w)| v * (w[1] - w[0])).sum()
    }

    /// Position with cumulative mass `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).saturating_sub(1).min(self.bins() - 1);
        let v = self.values[i];
        if v <= 0.0 {
            return self.edges[i];
        }
        (self.edges[i] + (u - self.cdf[i]) / v).clamp(self.edges[i], self.edges[i + 1])
    }

    /// Linear fit over the bins nearest one end, evaluated at `x`.
    pub fn extrapolate_at(&self, x: f64, from_left_end: bool) -> Result<f64> {
        let (c, v) = self.end_bins(from_left_end);
        let line = fit::linear_regression(&c, &v)?;
        Ok(line.slope * x + line.intercept)
    }

    /// Slope and intercept of the linear model used near one end.
    pub fn end_model(&self, from_left_end: bool) -> Result<(f64, f64)> {
        let (c, v) = self.end_bins(from_left_end);
        let line = fit::linear_regression(&c, &v)?;
        Ok((line.slope, line.intercept))
    }

    fn end_bins(&self, from_left_end: bool) -> (Vec<f64>, Vec<f64>) {
        let centers = self.centers();
        let n = self.bins();
        let k = ZERO_FIT_BINS.min(n);
        let range = if from_left_end { 0..k } else { n - k..n };
        (centers[range.clone()].to_vec(), self.values[range].to_vec())
    }

    /// Largest difference quotient between neighbouring bins.
    pub fn lipschitz(&self) -> f64 {
        let c = self.centers();
        self.values.windows(2).zip(c.windows(2)).map(|(v, x)| (v[1] - v[0]).abs() / (x[1] - x[0])).fold(0.0, f64::max)
    }
}

/// Stationary density of the induced map on Δ₀^side and its pushforward on the other base.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub side: BranchId,
    /// ĥ on Δ₀^side.
    pub primary: PiecewiseDensity,
    /// Pushforward of ĥ on the opposite base (the spread measure restricted there).
    pub companion: PiecewiseDensity,
    pub h_at_zero_minus: f64,
    pub h_at_zero_plus: f64,
    pub lipschitz_est: f64,
    /// ‖hᵀP − hᵀ‖₁ of the returned vector.
    pub residual: f64,
    pub sweeps: usize,
    /// Largest mass, on either base, in the region beyond the truncation depth.
    pub escaped_mass: f64,
}

impl DensityEstimate {
    /// Density on Δ₀⁻ (primary or companion).
    pub fn on_minus(&self) -> &PiecewiseDensity {
        match self.side {
            BranchId::Left => &self.primary,
            BranchId::Right => &self.companion,
        }
    }

    /// Density on Δ₀⁺ (primary or companion).
    pub fn on_plus(&self) -> &PiecewiseDensity {
        match self.side {
            BranchId::Left => &self.companion,
            BranchId::Right => &self.primary,
        }
    }

    pub fn on(&self, side: BranchId) -> &PiecewiseDensity {
        match side {
            BranchId::Left => self.on_minus(),
            BranchId::Right => self.on_plus(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.primary.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.primary.values.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapModel;
    use crate::params::MapParams;
    use std::sync::Arc;

    #[test]
    fn sweep_splits_lengths() {
        let edges = vec![0.0, 1.0, 2.0, 3.0];
        let cuts = vec![0.5, 1.5, 2.0, 2.25];
        let mut rows = vec![Vec::new(); 3];
        sweep(&edges, &cuts, &mut rows);
        assert_eq!(rows[0], vec![(0, 0.5)]);
        assert_eq!(rows[1], vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(rows[2], vec![(2, 0.25)]);
    }

    #[test]
    fn piecewise_density_quantile_inverts_cdf() {
        let d = PiecewiseDensity::from_masses(vec![0.0, 1.0, 3.0], &[1.0, 3.0]);
        assert!((d.total() - 1.0).abs() < 1e-15);
        for u in [0.0, 0.1, 0.25, 0.6, 0.99] {
            let x = d.quantile(u);
            assert!((d.cdf_at(x) - u).abs() < 1e-14);
        }
    }

    #[test]
    fn doubling_density_is_flat() {
        let map = Arc::new(MapModel::build(MapParams::doubling()).unwrap());
        let table = PartitionTable::compute(map, 60).unwrap();
        let op = UlamOperator::build(&table, BranchId::Left, 64, 64, 40).unwrap();
        assert!(op.forward.matrix.max_row_defect() < 1e-12);
        let d = op.stationary_density().unwrap();
        assert!(d.residual < 1e-10);
        // Lebesgue is invariant, so the induced density on Δ₀⁻ = (−1/2, 0) is 2.
        for v in &d.primary.values {
            assert!((v - 2.0).abs() < 1e-8, "{v}");
        }
        assert!((d.h_at_zero_plus - 2.0).abs() < 1e-8);
    }
}
