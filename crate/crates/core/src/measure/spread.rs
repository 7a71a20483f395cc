//! The spread measure μ̃ = Σₙ gⁿ₊(μ̂|{τ > n}) on the whole interval.
//!
//! An excursion from x ∈ δₘ⁻ spends times 0..m on the left base and the
//! right-hand region, then continues from G̃⁻(x) ∈ Δ₀⁺ with the mirrored
//! structure. Hence ∫φ dμ̃ = ∫ A⁻ ĥ + ∫ A⁺ ĥ₊ where A(x) = Σ_{j<m} φ(gʲx) on δₘ
//! and ĥ₊ is the pushforward density on Δ₀⁺.

use rayon::prelude::*;
use serde::Serialize;

use super::{DensityEstimate, PiecewiseDensity};
use crate::error::{Error, Result};
use crate::fit;
use crate::induced::{capped_return, Excursion};
use crate::partition::{PartitionTable, Scaling, Sequence};
use crate::point::{BranchId, Point};
use crate::sampler::OrbitSampler;

/// Cells integrated explicitly before the tail model takes over.
pub const QUADRATURE_DEPTH: usize = 2000;
/// Pullback steps summed explicitly for interval masses.
pub const PULLBACK_DEPTH: usize = 5000;

const GL_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// Contributions to one spread integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadIntegral {
    pub value: f64,
    /// Excursion halves started on Δ₀⁻ and on Δ₀⁺.
    pub from_minus: f64,
    pub from_plus: f64,
    /// Part contributed by the tail model beyond `depth`.
    pub tail: f64,
    pub depth: usize,
}

/// Integrates against μ̃ built from a [`DensityEstimate`].
pub struct SpreadQuadrature<'a> {
    table: &'a PartitionTable,
    density: &'a DensityEstimate,
    depth: usize,
}

impl<'a> SpreadQuadrature<'a> {
    pub fn new(table: &'a PartitionTable, density: &'a DensityEstimate, depth: usize) -> Result<Self> {
        let depth = depth.min(table.n_max());
        if depth < 20 {
            return Err(Error::InvalidParams(format!("quadrature depth {depth} is below 20")));
        }
        Ok(SpreadQuadrature { table, density, depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// ∫φ dμ̃. Infinite when the tail model diverges.
    pub fn integrate<F>(&self, phi: F) -> Result<SpreadIntegral>
    where
        F: Fn(Point) -> f64 + Sync,
    {
        let (minus_body, minus_tail) = self.half(BranchId::Left, &phi)?;
        let (plus_body, plus_tail) = self.half(BranchId::Right, &phi)?;
        let from_minus = minus_body + minus_tail;
        let from_plus = plus_body + plus_tail;
        Ok(SpreadIntegral {
            value: from_minus + from_plus,
            from_minus,
            from_plus,
            tail: minus_tail + plus_tail,
            depth: self.depth,
        })
    }

    /// μ̃(I) = ∫τ dμ̂.
    pub fn total_mass(&self) -> Result<f64> {
        Ok(self.integrate(|_| 1.0)?.value)
    }

    /// ∫φ dμ for the normalised μ = μ̃/μ̃(I).
    pub fn mean<F>(&self, phi: F) -> Result<f64>
    where
        F: Fn(Point) -> f64 + Sync,
    {
        Ok(self.integrate(phi)?.value / self.total_mass()?)
    }

    fn half<F>(&self, side: BranchId, phi: &F) -> Result<(f64, f64)>
    where
        F: Fn(Point) -> f64 + Sync,
    {
        let map = self.table.map();
        let d = self.density.on(side);
        let excursion_sum = |x: f64, m: usize| -> f64 {
            let mut p = Point::new(x);
            let mut acc = 0.0;
            for j in 0..m {
                if j > 0 {
                    p = map.apply(p);
                }
                acc += phi(p);
            }
            acc
        };
        let cells: Vec<f64> = (1..=self.depth)
            .into_par_iter()
            .map(|m| {
                let (lo, hi) = self.table.first_level_cell(side, m);
                let (lo, hi) = (lo.x(), hi.x());
                let first = d.bin_of(lo);
                let mut acc = 0.0;
                let mut a = lo;
                let mut bin = first;
                while a < hi {
                    let b = if bin + 1 < d.edges.len() { d.edges[bin + 1].min(hi) } else { hi };
                    if b > a {
                        let h = d.values[bin.min(d.bins() - 1)];
                        let mid = 0.5 * (a + b);
                        let half = 0.5 * (b - a);
                        let s: f64 = GL_NODES.iter().zip(GL_WEIGHTS).map(|(t, w)| w * excursion_sum(mid + half * t, m)).sum();
                        acc += half * h * s;
                    }
                    a = b;
                    bin += 1;
                    if bin >= d.bins() {
                        // Rounding at the last edge.
                        if a < hi {
                            let h = d.values[d.bins() - 1];
                            acc += (hi - a) * h * excursion_sum(0.5 * (a + hi), m);
                        }
                        break;
                    }
                }
                acc
            })
            .collect();
        let body: f64 = cells.iter().sum();

        // Beyond the explicit depth: |δₘ| follows its fitted law, h is its value at 0,
        // and each further cell adds one more visit near the far fixed point.
        let n = self.depth;
        let (lo, hi) = self.table.first_level_cell(side, n);
        let a_last = excursion_sum(0.5 * (lo.x() + hi.x()), n);
        let far = match side {
            BranchId::Left => Point::from_upper_gap(0.0),
            BranchId::Right => Point::from_lower_gap(0.0),
        };
        let phi_far = phi(far);
        let h0 = match side {
            BranchId::Left => self.density.h_at_zero_minus,
            BranchId::Right => self.density.h_at_zero_plus,
        };
        let seq = match side {
            BranchId::Left => Sequence::SmallDeltaMinus,
            BranchId::Right => Sequence::SmallDeltaPlus,
        };
        let ms: Vec<f64> = (n / 2..=n).map(|m| m as f64).collect();
        let widths: Vec<f64> = (n / 2..=n)
            .map(|m| {
                let (lo, hi) = self.table.first_level_cell(side, m);
                hi.x() - lo.x()
            })
            .collect();
        let (s0, s1) = match seq.theory(self.table.params()).scaling {
            Scaling::PowerLaw => {
                let (p, c, _) = fit::power_law(&ms, &widths)?;
                let start = n as f64 + 0.5;
                if p >= -1.0 {
                    (f64::INFINITY, f64::INFINITY)
                } else {
                    let s0 = c * start.powf(p + 1.0) / -(p + 1.0);
                    let s1 = if p < -2.0 { c * start.powf(p + 2.0) / -(p + 2.0) - n as f64 * s0 } else { f64::INFINITY };
                    (s0, s1)
                }
            }
            Scaling::Exponential => {
                let (r, c, _) = fit::exponential(&ms, &widths)?;
                let q = r.exp();
                let first = c * (r * (n + 1) as f64).exp();
                (first / (1.0 - q), first / ((1.0 - q) * (1.0 - q)))
            }
        };
        let tail = if phi_far == 0.0 { h0 * s0 * a_last } else { h0 * (s0 * a_last + s1 * phi_far) };
        Ok((body, tail))
    }

    /// μ̃((a, b)) with exact pullbacks of the endpoints.
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<f64> {
        let map = self.table.map();
        let (a, b) = (a.max(-1.0), b.min(1.0));
        if !(b > a) {
            return Ok(0.0);
        }
        let x0m = map.x0_minus().x();
        let x0p = map.x0_plus().x();
        let clip = |lo: f64, hi: f64| (a.max(lo), b.min(hi));
        let mut total = 0.0;
        let (lo, hi) = clip(x0m, 0.0);
        if hi > lo {
            total += self.density.on_minus().mass(lo, hi);
        }
        let (lo, hi) = clip(0.0, x0p);
        if hi > lo {
            total += self.density.on_plus().mass(lo, hi);
        }
        let (lo, hi) = clip(x0p, 1.0);
        if hi > lo {
            total += self.pullback_mass(BranchId::Left, lo, hi)?;
        }
        let (lo, hi) = clip(-1.0, x0m);
        if hi > lo {
            total += self.pullback_mass(BranchId::Right, lo, hi)?;
        }
        Ok(total)
    }

    /// Normalised μ((a, b)).
    pub fn interval_probability(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.interval_mass(a, b)? / self.total_mass()?)
    }

    /// Σ_{j≥1} mass of the preimage of (lo, hi) in Δ₀^side whose first j−1
    /// iterates stay on the far side.
    fn pullback_mass(&self, side: BranchId, lo: f64, hi: f64) -> Result<f64> {
        let map = self.table.map();
        let d: &PiecewiseDensity = self.density.on(side);
        // An endpoint at the fixed point pulls back to 0 every time.
        let start = |x: f64| -> Option<Point> { (x.abs() < 1.0).then(|| Point::new(x)) };
        let mut ends = [start(lo), start(hi)];
        let at_zero = Point::new(match side {
            BranchId::Left => -0.0,
            BranchId::Right => 0.0,
        });
        let mut terms = Vec::with_capacity(PULLBACK_DEPTH);
        for j in 1..=PULLBACK_DEPTH {
            if j > 1 {
                for e in ends.iter_mut().flatten() {
                    *e = map.inverse(side.other(), *e)?;
                }
            }
            let mut x = [at_zero.x(); 2];
            for (k, e) in ends.iter().enumerate() {
                if let Some(p) = e {
                    x[k] = map.inverse(side, *p)?.x();
                }
            }
            let t = d.mass(x[0].min(x[1]), x[0].max(x[1]));
            terms.push(t);
            if j >= 64 && t <= 1e-17 * terms.iter().sum::<f64>() {
                return Ok(terms.iter().sum());
            }
        }
        let sum: f64 = terms.iter().sum();
        let last = terms[PULLBACK_DEPTH - 1];
        let mid = terms[PULLBACK_DEPTH / 2 - 1];
        let tail = if last <= 0.0 || mid <= 0.0 {
            0.0
        } else if last < mid {
            let q = (mid / last).ln() / 2f64.ln();
            if q > 1.0 {
                last * PULLBACK_DEPTH as f64 / (q - 1.0)
            } else {
                f64::INFINITY
            }
        } else {
            f64::INFINITY
        };
        Ok(sum + tail)
    }
}

/// Return-time sums Σ_{n≤N} μ̂(τ > n) and the finiteness verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadMeasure {
    pub samples: usize,
    pub n_cap: u64,
    pub censored: usize,
    /// μ̂(τ > n) for n = 0..=n_cap.
    pub ccdf: Vec<f64>,
    /// Σ_{k≤n} μ̂(τ > k); nondecreasing.
    pub partial_sums: Vec<f64>,
    /// Decay exponent p of μ̂(τ > t) ≈ c·t^{−p}.
    pub fitted_exponent: f64,
    pub fit_window: (u64, u64),
    /// Exponential rate r of μ̂(τ > t) ≈ c·e^{−rt} over the populated range.
    pub geometric_rate: f64,
    pub finite: bool,
    /// μ̃(I) from quadrature when finite.
    pub total_mass: Option<f64>,
}

impl SpreadMeasure {
    /// Partial sum at `n` (clamped to the cap).
    pub fn partial_sum(&self, n: usize) -> f64 {
        self.partial_sums[n.min(self.partial_sums.len() - 1)]
    }
}

/// Minimum number of exceedances for a threshold to enter a tail fit.
pub const MIN_EXCEEDANCES: usize = 30;

/// Monte Carlo of censored return times under ĥ on Δ₀⁻.
///
/// `t_min` is the lower end of the power-law fit window.
pub fn spread_measure(
    table: &PartitionTable,
    density: &DensityEstimate,
    sampler: &OrbitSampler,
    samples: usize,
    n_cap: u64,
    t_min: u64,
) -> Result<SpreadMeasure> {
    let map = table.map();
    let base = density.on_minus();
    let draws: Vec<(Option<u64>, f64)> = sampler.run(samples, |rng, _| {
        let (x, w) = sampler.draw_base(rng, base);
        Ok(match capped_return(map, x, n_cap)? {
            Excursion::Returned(r) => (Some(r.tau), w),
            Excursion::Censored { .. } => (None, w),
        })
    })?;
    let cap = n_cap as usize;
    let mut mass = vec![0.0; cap + 2];
    let mut counts = vec![0usize; cap + 2];
    let mut total_w = 0.0;
    let mut censored = 0;
    for (tau, w) in &draws {
        let k = match tau {
            Some(t) => (*t as usize).min(cap + 1),
            None => {
                censored += 1;
                cap + 1
            }
        };
        mass[k] += w;
        counts[k] += 1;
        total_w += w;
    }
    // ccdf[n] = P(τ > n), exceed[n] = #{τ > n}.
    let mut ccdf = vec![0.0; cap + 1];
    let mut exceed = vec![0usize; cap + 1];
    let mut acc = 0.0;
    let mut cnt = 0;
    for n in (0..=cap).rev() {
        acc += mass[n + 1];
        cnt += counts[n + 1];
        ccdf[n] = acc / total_w;
        exceed[n] = cnt;
    }
    let partial_sums: Vec<f64> = ccdf
        .iter()
        .scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        })
        .collect();

    let populated = (1..=cap).rev().find(|&n| exceed[n] >= MIN_EXCEEDANCES).unwrap_or(0);
    let t_lo = t_min.max(1) as usize;
    let (fitted_exponent, fit_window) = if populated >= 4 * t_lo {
        let ts = log_grid(t_lo, populated, 24);
        let xs: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| ccdf[t]).collect();
        let (p, _, _) = fit::power_law(&xs, &ys)?;
        (-p, (t_lo as u64, populated as u64))
    } else {
        // The tail dies out before a power-law window exists.
        (f64::INFINITY, (t_lo as u64, populated as u64))
    };
    let geometric_rate = if populated >= 3 {
        let xs: Vec<f64> = (1..=populated).map(|t| t as f64).collect();
        let ys: Vec<f64> = (1..=populated).map(|t| ccdf[t]).collect();
        -fit::exponential(&xs, &ys)?.0
    } else {
        f64::INFINITY
    };
    let finite = fitted_exponent > 1.0;
    let total_mass = if finite { Some(SpreadQuadrature::new(table, density, QUADRATURE_DEPTH)?.total_mass()?) } else { None };
    Ok(SpreadMeasure {
        samples,
        n_cap,
        censored,
        ccdf,
        partial_sums,
        fitted_exponent,
        fit_window,
        geometric_rate,
        finite,
        total_mass,
    })
}

/// About `points` distinct integers, log-spaced over [lo, hi].
pub fn log_grid(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    let (l, h) = ((lo.max(1)) as f64, hi.max(lo.max(1)) as f64);
    let mut out: Vec<usize> =
        (0..points).map(|i| (l * (h / l).powf(i as f64 / (points - 1).max(1) as f64)).round() as usize).collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapModel;
    use crate::measure::UlamOperator;
    use crate::params::MapParams;
    use std::sync::Arc;

    fn doubling() -> (PartitionTable, DensityEstimate) {
        let map = Arc::new(MapModel::build(MapParams::doubling()).unwrap());
        let table = PartitionTable::compute(map, 60).unwrap();
        let d = UlamOperator::build(&table, BranchId::Left, 64, 64, 50).unwrap().stationary_density().unwrap();
        (table, d)
    }

    #[test]
    fn doubling_spread_is_lebesgue() {
        let (table, d) = doubling();
        let q = SpreadQuadrature::new(&table, &d, 50).unwrap();
        // Kac: μ̃(I) = 1/Leb(Δ₀⁻) for normalised Lebesgue.
        assert!((q.total_mass().unwrap() - 4.0).abs() < 1e-9);
        for (a, b) in [(-0.9, -0.7), (0.6, 0.95), (-0.2, 0.3), (0.5, 1.0)] {
            let p = q.interval_probability(a, b).unwrap();
            assert!((p - (b - a) / 2.0).abs() < 1e-9, "({a},{b}) {p}");
        }
        // ∫x² dμ = 1/3 on [−1, 1].
        assert!((q.mean(|p| p.x() * p.x()).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn grid_is_increasing() {
        let g = log_grid(10, 1000, 24);
        assert_eq!(g[0], 10);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
