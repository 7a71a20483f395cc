//! Monte Carlo diagnostics: return-time tails, correlations, Lyapunov
//! consistency, induced observables and limit laws of Birkhoff sums.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::check::CheckReport;
use crate::error::{Error, Result};
use crate::fit;
use crate::induced::{capped_return, in_base, Excursion, RETURN_BUDGET};
use crate::map::MapModel;
use crate::measure::{log_grid, ConstantsReport, DensityEstimate, SpreadQuadrature, MIN_EXCEEDANCES, QUADRATURE_DEPTH};
use crate::observable::{Observable, ENDPOINT_TOL};
use crate::params::MapParams;
use crate::partition::PartitionTable;
use crate::point::{BranchId, Point};
use crate::sampler::{OrbitSampler, BURN_IN};

/// β_φ: 0, β₁, β₂ or β according to which endpoint values vanish.
pub fn beta_phi(obs: &Observable, params: &MapParams) -> f64 {
    let minus = obs.value_at_minus1.abs() > ENDPOINT_TOL;
    let plus = obs.value_at_plus1.abs() > ENDPOINT_TOL;
    match (minus, plus) {
        (false, false) => 0.0,
        (true, false) => params.beta1(),
        (false, true) => params.beta2(),
        (true, true) => params.beta(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderConditions {
    pub beta_phi: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Lower bounds on ν₁, ν₂ for (H).
    pub h_bounds: (f64, f64),
    /// Lower bounds on ν₁, ν₂ for (H′).
    pub h_prime_bounds: (f64, f64),
    pub h: bool,
    pub h_prime: bool,
}

/// ν₁ > (β₁ − ½)/k₂, ν₂ > (β₂ − ½)/k₁ and the primed versions with β_φ in place of ½.
pub fn holder_conditions(obs: &Observable, params: &MapParams) -> HolderConditions {
    let bp = beta_phi(obs, params);
    let (nu1, nu2) = (obs.holder_nu1, obs.holder_nu2);
    let h_bounds = ((params.beta1() - 0.5) / params.k2, (params.beta2() - 0.5) / params.k1);
    let h_prime_bounds = ((params.beta1() - bp) / params.k2, (params.beta2() - bp) / params.k1);
    HolderConditions {
        beta_phi: bp,
        nu1,
        nu2,
        h_bounds,
        h_prime_bounds,
        h: nu1 > h_bounds.0 && nu2 > h_bounds.1,
        h_prime: nu1 > h_prime_bounds.0 && nu2 > h_prime_bounds.1,
    }
}

/// Excursion counts of one sampled return, with its importance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnSample {
    pub tau_plus: u64,
    pub tau_minus: u64,
    pub censored: bool,
    pub weight: f64,
}

impl ReturnSample {
    pub fn tau(&self) -> u64 {
        self.tau_plus + self.tau_minus
    }
}

/// Draws `samples` points of Δ₀⁻ from the density and follows each for at most `cap` steps.
pub fn sample_returns(
    map: &MapModel,
    density: &DensityEstimate,
    sampler: &OrbitSampler,
    samples: usize,
    cap: u64,
) -> Result<Vec<ReturnSample>> {
    let base = density.on_minus();
    sampler.run(samples, |rng, _| {
        let (x, weight) = sampler.draw_base(rng, base);
        Ok(match capped_return(map, x, cap)? {
            Excursion::Returned(r) => ReturnSample { tau_plus: r.tau_plus, tau_minus: r.tau_minus, censored: false, weight },
            Excursion::Censored { tau_plus, tau_minus } => ReturnSample { tau_plus, tau_minus, censored: true, weight },
        })
    })
}

/// Weighted empirical CCDF of `values` at `thresholds` with standard errors.
pub fn weighted_ccdf(values: &[(f64, f64)], thresholds: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let total: f64 = values.iter().map(|(_, w)| w).sum();
    let mut sorted: Vec<(f64, f64)> = values.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut p = Vec::with_capacity(thresholds.len());
    let mut se = Vec::with_capacity(thresholds.len());
    let mut count = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let first = sorted.partition_point(|(v, _)| *v <= t);
        let above = &sorted[first..];
        let m: f64 = above.iter().map(|(_, w)| w).sum::<f64>() / total;
        let var: f64 = sorted
            .iter()
            .enumerate()
            .map(|(i, (_, w))| {
                let ind = if i >= first { 1.0 } else { 0.0 };
                w * w * (ind - m) * (ind - m)
            })
            .sum::<f64>();
        p.push(m);
        se.push(var.sqrt() / total);
        count.push(above.len());
    }
    (p, se, count)
}

/// One side of an empirical tail and its fitted and predicted decay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedTail {
    pub ccdf: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub exceedances: Vec<usize>,
    pub theoretical: Vec<Option<f64>>,
    /// Log-log slope over thresholds with enough exceedances.
    pub fitted_exponent: f64,
    pub fitted_constant: f64,
    /// Exponential rate r of ccdf ≈ c·e^{rt}.
    pub fitted_rate: f64,
    /// Power −1/βᵢ of the leading term, when one is a power law.
    pub predicted_exponent: Option<f64>,
    /// Geometric factor bounding the decay when both contributing fixed points are hyperbolic.
    pub predicted_factor: Option<f64>,
    /// Geometric mean of ccdf(t)·t^{−predicted} over the fitted thresholds.
    pub pinned_constant: Option<f64>,
}

fn signed_tail(
    values: &[(f64, f64)],
    thresholds: &[f64],
    predicted_exponent: Option<f64>,
    predicted_factor: Option<f64>,
    theory: impl Fn(f64) -> Option<f64>,
) -> Result<SignedTail> {
    let (ccdf, std_errors, exceedances) = weighted_ccdf(values, thresholds);
    let usable: Vec<usize> = (0..thresholds.len()).filter(|&i| exceedances[i] >= MIN_EXCEEDANCES && ccdf[i] > 0.0).collect();
    let xs: Vec<f64> = usable.iter().map(|&i| thresholds[i]).collect();
    let ys: Vec<f64> = usable.iter().map(|&i| ccdf[i]).collect();
    let (fitted_exponent, fitted_constant, fitted_rate) = if usable.len() >= 3 {
        let (p, c, _) = fit::power_law(&xs, &ys)?;
        let (r, _, _) = fit::exponential(&xs, &ys)?;
        (p, c, r)
    } else {
        (f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY)
    };
    let pinned_constant = predicted_exponent.filter(|_| !usable.is_empty()).map(|p| {
        let s: f64 = xs.iter().zip(&ys).map(|(t, y)| (y * t.powf(-p)).ln()).sum();
        (s / xs.len() as f64).exp()
    });
    Ok(SignedTail {
        theoretical: thresholds.iter().map(|&t| theory(t)).collect(),
        ccdf,
        std_errors,
        exceedances,
        fitted_exponent,
        fitted_constant,
        fitted_rate,
        predicted_exponent,
        predicted_factor,
        pinned_constant,
    })
}

/// Tails of τ_{a,b} = a·τ⁺ + b·τ⁻ under μ̂.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub a: f64,
    pub b: f64,
    pub samples: usize,
    pub censored: usize,
    pub thresholds: Vec<f64>,
    /// μ̂(τ_{a,b} > t).
    pub upper: SignedTail,
    /// μ̂(τ_{a,b} < −t), present when a or b is negative.
    pub lower: Option<SignedTail>,
}

impl TailReport {
    pub fn empirical_ccdf(&self) -> &[f64] {
        &self.upper.ccdf
    }

    pub fn fitted_exponent(&self) -> f64 {
        self.upper.fitted_exponent
    }

    pub fn predicted_exponent(&self) -> Option<f64> {
        self.upper.predicted_exponent
    }
}

/// Exponent and factor predicted for the tail fed by positive coefficients `(ca, cb)`.
fn predicted_decay(params: &MapParams, ca: f64, cb: f64) -> (Option<f64>, Option<f64>) {
    let mut powers = Vec::new();
    let mut factors = Vec::new();
    if ca > 0.0 {
        if params.ell2 > 0.0 {
            powers.push(-1.0 / params.beta2());
        } else {
            factors.push((1.0 + params.b2).powf(-1.0 / params.k1));
        }
    }
    if cb > 0.0 {
        if params.ell1 > 0.0 {
            powers.push(-1.0 / params.beta1());
        } else {
            factors.push((1.0 + params.b1).powf(-1.0 / params.k2));
        }
    }
    let power = powers.into_iter().reduce(f64::max);
    let factor = if power.is_none() { factors.into_iter().reduce(f64::max) } else { None };
    (power, factor)
}

/// Empirical tails of a·τ⁺ + b·τ⁻ from `samples` returns.
#[allow(clippy::too_many_arguments)]
pub fn tau_tail(
    map: &MapModel,
    density: &DensityEstimate,
    sampler: &OrbitSampler,
    samples: usize,
    a: f64,
    b: f64,
    thresholds: &[f64],
    constants: Option<&ConstantsReport>,
) -> Result<TailReport> {
    if a == 0.0 && b == 0.0 {
        return Err(Error::InvalidParams("a and b cannot both be zero".into()));
    }
    let t_max = thresholds.iter().copied().fold(1.0, f64::max);
    let smallest = [a.abs(), b.abs()].into_iter().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let cap = ((100.0 * t_max / smallest) as u64).clamp(100_000, RETURN_BUDGET);
    let draws = sample_returns(map, density, sampler, samples, cap)?;
    let censored = draws.iter().filter(|s| s.censored).count();
    let values: Vec<(f64, f64)> = draws.iter().map(|s| (a * s.tau_plus as f64 + b * s.tau_minus as f64, s.weight)).collect();
    let params = map.params();
    let (up_p, up_f) = predicted_decay(params, a.max(0.0), b.max(0.0));
    let upper = signed_tail(&values, thresholds, up_p, up_f, |t| {
        constants.map(|c| {
            let term = |cc: f64, beta: f64, on: bool| if on && cc > 0.0 { cc * t.powf(-1.0 / beta) } else { 0.0 };
            term(c.c_a, c.beta2, a > 0.0) + term(c.c_b, c.beta1, b > 0.0)
        })
    })?;
    let lower = if a < 0.0 || b < 0.0 {
        let neg: Vec<(f64, f64)> = values.iter().map(|(v, w)| (-v, *w)).collect();
        let (lo_p, lo_f) = predicted_decay(params, (-a).max(0.0), (-b).max(0.0));
        Some(signed_tail(&neg, thresholds, lo_p, lo_f, |t| {
            constants.map(|c| {
                let term = |cc: f64, beta: f64, on: bool| if on && cc > 0.0 { cc * t.powf(-1.0 / beta) } else { 0.0 };
                term(c.c_a, c.beta2, a < 0.0) + term(c.c_b, c.beta1, b < 0.0)
            })
        })?)
    } else {
        None
    };
    Ok(TailReport { a, b, samples, censored, thresholds: thresholds.to_vec(), upper, lower })
}

/// Compares μ̂(τ⁺ > t) with the density mass of (y_t⁻, 0) and μ̂(τ⁻ > t) with
/// the pushforward mass of (0, y_t⁺).
pub fn lemma_distribution_check(
    table: &PartitionTable,
    density: &DensityEstimate,
    sampler: &OrbitSampler,
    samples: usize,
    t_values: &[u64],
) -> Result<CheckReport> {
    let t_max = t_values.iter().copied().max().unwrap_or(1);
    if t_max as usize > table.n_max() {
        return Err(Error::InvalidParams(format!("t = {t_max} exceeds the partition depth {}", table.n_max())));
    }
    let draws = sample_returns(table.map(), density, sampler, samples, RETURN_BUDGET)?;
    let mut report = CheckReport::new("lemma_distribution");
    report.samples = samples;
    let mut worst: f64 = 0.0;
    for &t in t_values {
        let n = t as usize;
        // A censored orbit with no left-hand steps yet is still in its τ⁺ phase.
        let plus: Vec<(f64, f64)> = draws
            .iter()
            .map(|s| {
                let exceeds = s.tau_plus > t || (s.censored && s.tau_minus == 0);
                (if exceeds { 1.0 } else { 0.0 }, s.weight)
            })
            .collect();
        let minus: Vec<(f64, f64)> = draws.iter().map(|s| (if s.tau_minus > t { 1.0 } else { 0.0 }, s.weight)).collect();
        let quad_plus = density.on_minus().mass(table.y_minus(n).x(), 0.0);
        let quad_minus = density.on_plus().mass(0.0, table.y_plus(n).x());
        for (label, vals, quad) in [("plus", plus, quad_plus), ("minus", minus, quad_minus)] {
            let (p, se, _) = weighted_ccdf(&vals, &[0.5]);
            let z = if se[0] > 0.0 {
                (p[0] - quad) / se[0]
            } else if p[0] == quad {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z.abs());
            if z.abs() > 3.0 {
                report.violations += 1;
            }
            report = report
                .detail(format!("t{t}_{label}_empirical"), p[0])
                .detail(format!("t{t}_{label}_quadrature"), quad)
                .detail(format!("t{t}_{label}_std_error"), se[0])
                .detail(format!("t{t}_{label}_z"), z);
        }
    }
    report.statistic = worst;
    report.passed = report.violations == 0;
    Ok(report)
}

/// Correlations 𝒞ₙ(φ, ψ) = ∫φ·ψ∘gⁿ dμ − ∫φ dμ ∫ψ dμ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub lags: Vec<usize>,
    pub correlations: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub orbits: usize,
    pub orbit_length: usize,
    /// p in |𝒞ₙ| ≈ c·n^{−p} over `fit_window`; infinite when the correlations
    /// are below noise throughout the window.
    pub fitted_exponent: f64,
    pub fit_window: (usize, usize),
    pub fit_points: usize,
    /// r in |𝒞ₙ| ≈ c·e^{−rn} over the same lags.
    pub exponential_rate: f64,
    /// (1 − β)/β when the measure is finite and β > 0.
    pub bound_rate: Option<f64>,
    /// Fitted exponent ≥ `slack`·bound, or correlations already at noise level.
    pub passed: bool,
}

/// Lag products along stationary orbits; `fit_window` bounds the lags used in the fit.
#[allow(clippy::too_many_arguments)]
pub fn correlation_decay(
    map: &MapModel,
    density: &DensityEstimate,
    sampler: &OrbitSampler,
    phi: &Observable,
    psi: &Observable,
    n_max: usize,
    orbits: usize,
    orbit_length: usize,
    fit_window: (usize, usize),
    slack: f64,
) -> Result<DecayReport> {
    if orbits < 2 || orbit_length == 0 {
        return Err(Error::InvalidParams("need at least two orbits of positive length".into()));
    }
    let base = density.on_minus();
    // Per orbit: Σφₖ, Σψ_{k+n} and Σφₖψ_{k+n} for every lag.
    let per_orbit: Vec<(f64, Vec<f64>, Vec<f64>)> = sampler.run(orbits, |rng, _| {
        let (mut p, _) = sampler.draw_stationary(rng, map, base, BURN_IN);
        let len = orbit_length + n_max;
        let mut f = Vec::with_capacity(len);
        let mut g = Vec::with_capacity(len);
        for _ in 0..len {
            f.push(phi.eval(map, p));
            g.push(psi.eval(map, p));
            p = map.apply(p);
        }
        let sum_f: f64 = f[..orbit_length].iter().sum();
        let mut sum_g = vec![0.0; n_max + 1];
        let mut cross = vec![0.0; n_max + 1];
        for n in 0..=n_max {
            sum_g[n] = g[n..n + orbit_length].iter().sum();
            cross[n] = f[..orbit_length].iter().zip(&g[n..]).map(|(a, b)| a * b).sum();
        }
        Ok((sum_f, sum_g, cross))
    })?;
    let total = (orbits * orbit_length) as f64;
    let mean_f = per_orbit.iter().map(|o| o.0).sum::<f64>() / total;
    let mut correlations = Vec::with_capacity(n_max + 1);
    let mut std_errors = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mean_g = per_orbit.iter().map(|o| o.1[n]).sum::<f64>() / total;
        let mean_x = per_orbit.iter().map(|o| o.2[n]).sum::<f64>() / total;
        let c = mean_x - mean_f * mean_g;
        let est: Vec<f64> = per_orbit.iter().map(|o| o.2[n] / orbit_length as f64 - mean_f * mean_g).collect();
        let m = est.iter().sum::<f64>() / orbits as f64;
        let var = est.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (orbits - 1) as f64;
        correlations.push(c);
        std_errors.push((var / orbits as f64).sqrt());
    }

    let (lo, hi) = (fit_window.0.max(1), fit_window.1.min(n_max));
    let lags: Vec<usize> = log_grid(lo, hi, 30);
    let usable: Vec<usize> = lags.iter().copied().filter(|&n| correlations[n].abs() > 2.0 * std_errors[n]).collect();
    let xs: Vec<f64> = usable.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|&n| correlations[n].abs()).collect();
    let (fitted_exponent, exponential_rate) = if usable.len() >= 3 {
        (-fit::power_law(&xs, &ys)?.0, -fit::exponential(&xs, &ys)?.0)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let beta = map.params().beta();
    let bound_rate = (beta > 0.0 && beta < 1.0).then(|| (1.0 - beta) / beta);
    let passed = match bound_rate {
        Some(r) => fitted_exponent >= slack * r,
        None => exponential_rate > 0.0,
    };
    Ok(DecayReport {
        lags: (0..=n_max).collect(),
        correlations,
        std_errors,
        orbits,
        orbit_length,
        fitted_exponent,
        fit_window: (lo, hi),
        fit_points: usable.len(),
        exponential_rate,
        bound_rate,
        passed,
    })
}

/// ∫log g′ dμ by orbit averages and by quadrature against the spread density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub birkhoff: f64,
    pub birkhoff_std_error: f64,
    pub quadrature: f64,
    pub relative_difference: f64,
    pub orbits: usize,
    pub min_steps: u64,
    pub total_steps: u64,
    pub excursions: u64,
    /// Orbits stopped early on an exact endpoint hit.
    pub boundary_stops: usize,
}

/// Orbit averages run over whole excursions: each of `orbits` orbits starts on
/// Δ₀⁻ under ĥ and stops at its first return after `min_steps` steps.
pub fn lyapunov_consistency(
    table: &PartitionTable,
    density: &DensityEstimate,
    sampler: &OrbitSampler,
    orbits: usize,
    min_steps: u64,
) -> Result<ConsistencyReport> {
    let map = table.map();
    let base = density.on_minus();
    // An orbit that lands exactly on a base endpoint (every orbit of an affine
    // map with dyadic slopes does, in floating point) keeps its completed excursions.
    let runs: Vec<(f64, u64, u64, bool)> = sampler.run(orbits, |rng, _| {
        let (mut p, _) = sampler.draw_base(rng, base);
        let (mut sum, mut steps, mut count) = (0.0, 0u64, 0u64);
        while steps < min_steps {
            match capped_return(map, p, RETURN_BUDGET) {
                Ok(Excursion::Returned(r)) => {
                    sum += r.log_deriv;
                    steps += r.tau;
                    count += 1;
                    p = r.image;
                }
                Ok(Excursion::Censored { .. }) => return Err(Error::BudgetExceeded { x: p.x(), steps: RETURN_BUDGET }),
                Err(Error::BoundaryHit { .. }) => return Ok((sum, steps, count, true)),
                Err(e) => return Err(e),
            }
        }
        Ok((sum, steps, count, false))
    })?;
    if runs.iter().all(|r| r.1 == 0) {
        return Err(Error::InsufficientData("no orbit completed an excursion".into()));
    }
    let total_a: f64 = runs.iter().map(|r| r.0).sum();
    let total_t: u64 = runs.iter().map(|r| r.1).sum();
    let birkhoff = total_a / total_t as f64;
    let var: f64 = runs.iter().map(|r| (r.0 - birkhoff * r.1 as f64).powi(2)).sum();
    let birkhoff_std_error = var.sqrt() / total_t as f64;
    let quadrature = SpreadQuadrature::new(table, density, QUADRATURE_DEPTH)?.mean(|p| map.slope(p).ln())?;
    Ok(ConsistencyReport {
        birkhoff,
        birkhoff_std_error,
        quadrature,
        relative_difference: (birkhoff - quadrature).abs() / quadrature.abs(),
        orbits,
        min_steps,
        total_steps: total_t,
        excursions: runs.iter().map(|r| r.2).sum(),
        boundary_stops: runs.iter().filter(|r| r.3).count(),
    })
}

/// Φ, τ_{a,b} and Φ̃ over one excursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InducedValue {
    pub x: f64,
    pub tau: u64,
    pub tau_plus: u64,
    pub tau_minus: u64,
    /// Φ(x) = Σ_{k<τ} φ(gᵏx).
    pub phi_sum: f64,
    /// a·τ⁺ + b·τ⁻ with a = φ(1), b = φ(−1).
    pub tau_ab: f64,
    /// Σ_{k<τ} (φ − φ_{a,b})(gᵏx).
    pub phi_tilde: f64,
    /// Φ − τ_{a,b} − Φ̃.
    pub residual: f64,
}

/// Birkhoff sum of `obs` over the excursion of `x ∈ Δ₀⁻`.
pub fn induced_observable(map: &MapModel, obs: &Observable, x: Point) -> Result<InducedValue> {
    if !in_base(map, BranchId::Left, x) {
        return Err(Error::DomainError { x: x.x() });
    }
    let (a, b) = (obs.value_at_plus1, obs.value_at_minus1);
    let mut p = x;
    let (mut phi_sum, mut phi_tilde) = (0.0, 0.0);
    let (mut plus, mut minus) = (0u64, 0u64);
    for k in 0..RETURN_BUDGET {
        if k > 0 && in_base(map, BranchId::Left, p) {
            let tau_ab = a * plus as f64 + b * minus as f64;
            return Ok(InducedValue {
                x: x.x(),
                tau: k,
                tau_plus: plus,
                tau_minus: minus,
                phi_sum,
                tau_ab,
                phi_tilde,
                residual: phi_sum - tau_ab - phi_tilde,
            });
        }
        let v = obs.eval(map, p);
        let step_ab = if p.x() > 0.0 {
            plus += 1;
            a
        } else {
            minus += 1;
            b
        };
        phi_sum += v;
        phi_tilde += v - step_ab;
        p = map.apply(p);
    }
    Err(Error::BudgetExceeded { x: x.x(), steps: RETURN_BUDGET })
}

/// Tails of Φ and Φ̃ under μ̂.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InducedTailReport {
    pub samples: usize,
    pub beta_phi: f64,
    /// −1/β_φ when β_φ > 0.
    pub predicted_exponent: Option<f64>,
    pub thresholds: Vec<f64>,
    pub phi_upper: SignedTail,
    pub phi_lower: SignedTail,
    /// Thresholds used for Φ̃: log-spaced between its 90% quantile and the
    /// level with `MIN_EXCEEDANCES` exceedances.
    pub tilde_thresholds: Vec<f64>,
    pub tilde_abs: SignedTail,
    pub max_residual: f64,
    /// Φ̃'s fitted decay is strictly steeper than 1/β_φ (or Φ̃ vanishes).
    pub tilde_steeper: bool,
    /// The heavier of Φ's two tails has slope within `tolerance` of −1/β_φ.
    pub phi_matches: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn induced_tail_check(
    map: &MapModel,
    density: &DensityEstimate,
    obs: &Observable,
    sampler: &OrbitSampler,
    samples: usize,
    thresholds: &[f64],
    tolerance: f64,
) -> Result<InducedTailReport> {
    let base = density.on_minus();
    let values: Vec<(InducedValue, f64)> = sampler.run(samples, |rng, _| {
        let (x, w) = sampler.draw_base(rng, base);
        Ok((induced_observable(map, obs, x)?, w))
    })?;
    let bp = beta_phi(obs, map.params());
    let predicted = (bp > 0.0).then(|| -1.0 / bp);
    let phi: Vec<(f64, f64)> = values.iter().map(|(v, w)| (v.phi_sum, *w)).collect();
    let neg: Vec<(f64, f64)> = phi.iter().map(|(v, w)| (-v, *w)).collect();
    let phi_upper = signed_tail(&phi, thresholds, predicted, None, |_| None)?;
    let phi_lower = signed_tail(&neg, thresholds, predicted, None, |_| None)?;

    let tilde: Vec<(f64, f64)> = values.iter().map(|(v, w)| (v.phi_tilde.abs(), *w)).collect();
    let mut sorted: Vec<f64> = tilde.iter().map(|(v, _)| *v).collect();
    sorted.sort_by(f64::total_cmp);
    let q90 = sorted[(0.9 * sorted.len() as f64) as usize];
    let q_top = sorted[sorted.len().saturating_sub(MIN_EXCEEDANCES + 1)];
    let tilde_thresholds: Vec<f64> = if q90 > 0.0 && q_top > q90 {
        (0..16).map(|i| q90 * (q_top / q90).powf(i as f64 / 15.0)).collect()
    } else {
        vec![q90.max(f64::MIN_POSITIVE)]
    };
    let tilde_abs = signed_tail(&tilde, &tilde_thresholds, predicted, None, |_| None)?;
    let max_residual = values.iter().map(|(v, _)| v.residual.abs()).fold(0.0, f64::max);
    let vanishes = sorted.last().copied().unwrap_or(0.0) == 0.0;
    let tilde_steeper = vanishes || predicted.is_none_or(|p| tilde_abs.fitted_exponent < p);
    let heavier = phi_upper.fitted_exponent.max(phi_lower.fitted_exponent);
    let phi_matches = predicted.is_some_and(|p| ((heavier - p) / p).abs() <= tolerance);
    Ok(InducedTailReport {
        samples,
        beta_phi: bp,
        predicted_exponent: predicted,
        thresholds: thresholds.to_vec(),
        phi_upper,
        phi_lower,
        tilde_thresholds,
        tilde_abs,
        max_residual,
        tilde_steeper,
        phi_matches,
    })
}

/// Limit law predicted for the Birkhoff sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Regime {
    Clt,
    CltNs,
    StableLaw { alpha: f64 },
}

impl Regime {
    pub fn from_beta_phi(bp: f64) -> Self {
        if bp < 0.5 {
            Regime::Clt
        } else if bp == 0.5 {
            Regime::CltNs
        } else {
            Regime::StableLaw { alpha: 1.0 / bp }
        }
    }

    /// Normalising sequence for Sₙ.
    pub fn scale(self, n: usize, beta_phi: f64) -> f64 {
        let n = n as f64;
        match self {
            Regime::Clt => n.sqrt(),
            Regime::CltNs => (n * n.ln()).sqrt(),
            Regime::StableLaw { .. } => n.powf(beta_phi),
        }
    }
}

/// Statistics of normalised sums at one n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitAtN {
    pub n: usize,
    /// Mean and variance of Sₙ/scale(n).
    pub mean: f64,
    pub variance: f64,
    /// Mean of Sₙ/n with its standard error.
    pub drift: f64,
    pub drift_std_error: f64,
    /// KS distance to N(0, σ̂²) with σ̂² fitted at this n.
    pub ks_fitted: f64,
    /// KS distances of Sₙ/√n and Sₙ/√(n log n) to normals whose scale was
    /// fitted at the smallest n by `robust_sigma`.
    pub ks_sqrt_n_reference: f64,
    pub ks_sqrt_n_log_n_reference: f64,
    /// Hill estimates from the upper and lower 1% and from the pooled |Sₙ|.
    pub hill_upper: Option<f64>,
    pub hill_lower: Option<f64>,
    pub hill_pooled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitDiagnostics {
    pub regime: Regime,
    pub beta_phi: f64,
    pub n_values: Vec<usize>,
    pub sample_counts: Vec<usize>,
    pub per_n: Vec<LimitAtN>,
    /// KS distance at the largest n (CLT regimes).
    pub ks_distance: Option<f64>,
    /// Pooled tail index at the largest n (stable regime).
    pub tail_index_fit: Option<f64>,
    pub expected_tail_index: Option<f64>,
}

/// Fraction of the sample used by the Hill estimators.
pub const HILL_FRACTION: f64 = 0.01;

/// Kolmogorov–Smirnov distance of `values` to N(0, σ²).
pub fn ks_normal(values: &[f64], sigma: f64) -> Result<f64> {
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::InsufficientData(format!("normal: {e}")))?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max))
}

/// Normal-consistent scale from the interquartile range.
pub fn robust_sigma(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[(p * (v.len() - 1) as f64).round() as usize];
    (q(0.75) - q(0.25)) / IQR_PER_SIGMA
}

/// Interquartile range of N(0, 1).
const IQR_PER_SIGMA: f64 = 1.348_979_500_392_163_5;

/// Simulates Sₙ = Σ_{k<n} φ∘gᵏ over `replicas` stationary starts. `obs` must be centred.
pub fn limit_diagnostics(
    map: &MapModel,
    density: &DensityEstimate,
    obs: &Observable,
    sampler: &OrbitSampler,
    n_values: &[usize],
    replicas: usize,
) -> Result<LimitDiagnostics> {
    let mut ns = n_values.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || ns[0] < 2 || replicas < 100 {
        return Err(Error::InvalidParams("need n ≥ 2 and at least 100 replicas".into()));
    }
    let n_top = *ns.last().unwrap();
    let base = density.on_minus();
    let sums: Vec<Vec<f64>> = sampler.run(replicas, |rng, _| {
        let (mut p, _) = sampler.draw_stationary(rng, map, base, BURN_IN);
        let mut s = 0.0;
        let mut out = Vec::with_capacity(ns.len());
        let mut next = 0;
        for k in 1..=n_top {
            s += obs.eval(map, p);
            p = map.apply(p);
            if k == ns[next] {
                out.push(s);
                next += 1;
            }
        }
        Ok(out)
    })?;
    let bp = beta_phi(obs, map.params());
    let regime = Regime::from_beta_phi(bp);
    let column = |j: usize| -> Vec<f64> { sums.iter().map(|r| r[j]).collect() };
    let second_moment = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    let ref_raw = column(0);
    let n0 = ns[0] as f64;
    let ref_scale = robust_sigma(&ref_raw);
    let sigma_sqrt_n = ref_scale / n0.sqrt();
    let sigma_log = ref_scale / (n0 * n0.ln()).sqrt();
    let k_hill = ((replicas as f64 * HILL_FRACTION) as usize).max(2);

    let mut per_n = Vec::with_capacity(ns.len());
    for (j, &n) in ns.iter().enumerate() {
        let raw = column(j);
        let scale = regime.scale(n, bp);
        let z: Vec<f64> = raw.iter().map(|s| s / scale).collect();
        let m = z.iter().sum::<f64>() / z.len() as f64;
        let variance = z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (z.len() - 1) as f64;
        let per_step: Vec<f64> = raw.iter().map(|s| s / n as f64).collect();
        let drift = per_step.iter().sum::<f64>() / replicas as f64;
        let drift_var = per_step.iter().map(|v| (v - drift).powi(2)).sum::<f64>() / (replicas - 1) as f64;
        let sigma = second_moment(&z).sqrt();
        let nf = n as f64;
        let by_sqrt_n: Vec<f64> = raw.iter().map(|s| s / nf.sqrt()).collect();
        let by_log: Vec<f64> = raw.iter().map(|s| s / (nf * nf.ln()).sqrt()).collect();
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        let abs: Vec<f64> = z.iter().map(|v| v.abs()).collect();
        per_n.push(LimitAtN {
            n,
            mean: m,
            variance,
            drift,
            drift_std_error: (drift_var / replicas as f64).sqrt(),
            ks_fitted: if sigma > 0.0 { ks_normal(&z, sigma)? } else { 1.0 },
            ks_sqrt_n_reference: if sigma_sqrt_n > 0.0 { ks_normal(&by_sqrt_n, sigma_sqrt_n)? } else { 1.0 },
            ks_sqrt_n_log_n_reference: if sigma_log > 0.0 { ks_normal(&by_log, sigma_log)? } else { 1.0 },
            hill_upper: fit::hill(&z, k_hill).ok(),
            hill_lower: fit::hill(&neg, k_hill).ok(),
            hill_pooled: fit::hill(&abs, k_hill).ok(),
        });
    }
    let last = per_n.last().copied().unwrap();
    let (ks_distance, tail_index_fit, expected_tail_index) = match regime {
        Regime::Clt | Regime::CltNs => (Some(last.ks_fitted), None, None),
        Regime::StableLaw { alpha } => (None, last.hill_pooled, Some(alpha)),
    };
    Ok(LimitDiagnostics {
        regime,
        beta_phi: bp,
        sample_counts: vec![replicas; ns.len()],
        n_values: ns,
        per_n,
        ks_distance,
        tail_index_fit,
        expected_tail_index,
    })
}

/// Centres `obs` with its spread-measure mean so that ∫φ dμ = 0.
pub fn center_observable(table: &PartitionTable, density: &DensityEstimate, obs: &Observable) -> Result<Observable> {
    let map = table.map();
    let q = SpreadQuadrature::new(table, density, QUADRATURE_DEPTH)?;
    let total = q.total_mass()?;
    if !total.is_finite() {
        return Err(Error::InvalidParams("centring needs a finite invariant measure".into()));
    }
    let mean = q.integrate(|p| obs.eval(map, p))?.value / total;
    let bump = q.integrate(|p| p.lower_gap() * p.upper_gap())?.value / total;
    Ok(obs.centered(mean, bump))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::Expr;

    fn expr(s: &str) -> Expr {
        s.parse().unwrap()
    }

    #[test]
    fn beta_phi_cases() {
        let p = MapParams::new(0.5, 0.25, 1.5, 2.0, 1.0, 1.0, 1.0, 1.0);
        let both_zero = Observable::uniform(expr("(1+x)*(1-x)"));
        assert_eq!(beta_phi(&both_zero, &p), 0.0);
        let left = Observable::piecewise(expr("1"), expr("(1-x)"));
        assert_eq!(beta_phi(&left, &p), p.beta1());
        let right = Observable::piecewise(expr("(1+x)"), expr("2"));
        assert_eq!(beta_phi(&right, &p), p.beta2());
        let both = Observable::uniform(expr("x"));
        assert_eq!(beta_phi(&both, &p), p.beta());
    }

    #[test]
    fn holder_reference_numbers() {
        let p = MapParams::reference();
        let o = Observable::uniform(expr("x")).with_holder(0.1, 0.1);
        let h = holder_conditions(&o, &p);
        assert!((h.h_bounds.0 - 1.0 / 6.0).abs() < 1e-15);
        assert!(!h.h);
        assert!(h.h_prime);
    }

    #[test]
    fn weighted_ccdf_matches_counts() {
        let v: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 1.0)).collect();
        let (p, se, c) = weighted_ccdf(&v, &[49.5, 89.5]);
        assert_eq!(c, vec![50, 10]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.1).abs() < 1e-15);
        assert!((se[0] - (0.25f64 / 100.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let d = Normal::new(0.0, 2.0).unwrap();
        let v: Vec<f64> = (0..1000).map(|i| d.inverse_cdf((i as f64 + 0.5) / 1000.0)).collect();
        assert!(ks_normal(&v, 2.0).unwrap() < 0.0006);
        assert!(ks_normal(&v, 1.0).unwrap() > 0.1);
    }

    #[test]
    fn regimes() {
        assert_eq!(Regime::from_beta_phi(0.3), Regime::Clt);
        assert_eq!(Regime::from_beta_phi(0.5), Regime::CltNs);
        assert_eq!(Regime::from_beta_phi(0.75), Regime::StableLaw { alpha: 4.0 / 3.0 });
    }
}
