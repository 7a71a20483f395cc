use std::sync::Arc;

use serde::Serialize;
use twinmap::check::CheckReport;
use twinmap::induced::{
    cell_measure_bound_check, distortion_check, expansion_check, first_return, return_check, separation_check, DistortionReport,
};
use twinmap::measure::{
    log_grid, spread_measure, tail_constants, ConstantsReport, DensityEstimate, PiecewiseDensity, UlamOperator,
};
use twinmap::params::RegimeReport;
use twinmap::partition::{FitReport, PartitionTable, Sequence};
use twinmap::sampler::OrbitSampler;
use twinmap::statistics::{
    center_observable, correlation_decay, holder_conditions, induced_tail_check, lemma_distribution_check, limit_diagnostics,
    lyapunov_consistency, tau_tail, ConsistencyReport, DecayReport, HolderConditions, InducedTailReport, LimitDiagnostics,
    Regime, TailReport,
};
use twinmap::{fit, BranchId, Error, MapModel, Point, Result};

use crate::config::ExperimentConfig;
use crate::output::Series;

/// Shared state for one invocation: the model, lazily built tables and densities,
/// and everything destined for the report besides the results themselves.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub workers: usize,
    pub map: Arc<MapModel>,
    pub warnings: Vec<String>,
    pub series: Vec<Series>,
    table: Option<PartitionTable>,
    density: Option<DensityEstimate>,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, workers: usize) -> Result<Self> {
        let map = Arc::new(MapModel::build(cfg.map)?);
        let mut warnings = Vec::new();
        if map.iota_shrunk() {
            warnings.push(format!("iota shrunk from {} to {} during construction", cfg.map.iota, map.iota()));
        }
        Ok(Context { cfg, workers, map, warnings, series: Vec::new(), table: None, density: None })
    }

    pub fn sampler(&self, stream: u64) -> OrbitSampler {
        OrbitSampler::new(self.cfg.seed.wrapping_add(stream)).with_workers(self.workers)
    }

    fn require_finite(&self, what: &str) -> Result<()> {
        if self.cfg.map.classify().finite {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{what} needs a finite invariant measure (beta < 1)")))
        }
    }

    fn table(&mut self) -> Result<&PartitionTable> {
        if self.table.is_none() {
            self.table = Some(PartitionTable::compute(self.map.clone(), self.cfg.density_depth())?);
        }
        Ok(self.table.as_ref().unwrap())
    }

    /// Ulam density; a requested truncation that loses too much mass is doubled
    /// up to the table depth.
    fn ensure_density(&mut self) -> Result<()> {
        if self.density.is_none() {
            let (bins, companion) = (self.cfg.density.bins, self.cfg.density.companion_bins);
            let depth = self.cfg.density_depth();
            let mut m_max = self.cfg.m_max();
            self.table()?;
            let table = self.table.as_ref().unwrap();
            let op = loop {
                match UlamOperator::build(table, BranchId::Left, bins, companion, m_max) {
                    Err(Error::TruncationTooSmall { escaped }) if m_max < depth => {
                        let next = (2 * m_max).min(depth);
                        self.warnings.push(format!("M_max = {m_max} lost {escaped:.3e} of the mass; retrying with {next}"));
                        m_max = next;
                    }
                    other => break other?,
                }
            };
            let d = op.stationary_density()?;
            if d.escaped_mass > 0.0 {
                self.warnings.push(format!(
                    "escaped Lebesgue mass {:.3e} beyond M_max = {m_max} redistributed over the last cell",
                    d.escaped_mass
                ));
            }
            self.cfg.density.m_max = Some(m_max);
            self.density = Some(d);
        }
        Ok(())
    }

    /// Table and density; call `ensure_density` first.
    fn parts(&self) -> (&PartitionTable, &DensityEstimate) {
        (self.table.as_ref().unwrap(), self.density.as_ref().unwrap())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub iota: f64,
    pub iota_shrunk: bool,
    pub lambda_est: f64,
    pub n_minus: usize,
    pub n_plus: usize,
    pub x0_minus: f64,
    pub x0_plus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyOut {
    pub regime: RegimeReport,
    pub model: ModelSummary,
}

pub fn classify(ctx: &mut Context) -> Result<ClassifyOut> {
    let map = &ctx.map;
    let grid = 2000;
    let rows = (0..grid)
        .map(|i| {
            let p = Point::new(-1.0 + 2.0 * (i as f64 + 0.5) / grid as f64);
            vec![p.x(), map.apply(p).x(), map.slope(p)]
        })
        .collect();
    ctx.series.push(Series::new("graph", &["x", "g", "g_prime"], rows));
    Ok(ClassifyOut {
        regime: ctx.cfg.map.classify(),
        model: ModelSummary {
            iota: map.iota(),
            iota_shrunk: map.iota_shrunk(),
            lambda_est: map.lambda_est(),
            n_minus: map.n_minus(),
            n_plus: map.n_plus(),
            x0_minus: map.x0_minus().x(),
            x0_plus: map.x0_plus().x(),
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionOut {
    pub n_max: usize,
    pub n_minus: usize,
    pub n_plus: usize,
    pub fits: Vec<FitReport>,
}

pub fn partition(ctx: &mut Context) -> Result<PartitionOut> {
    let n_max = ctx.cfg.partition_depth();
    let table = PartitionTable::compute(ctx.map.clone(), n_max)?;
    let window = ctx.cfg.partition.window;
    let fits = Sequence::ALL.iter().map(|&s| table.fit_asymptotics(s, window)).collect::<Result<Vec<_>>>()?;
    let rows = log_grid(1, n_max, 200)
        .into_iter()
        .map(|n| {
            let mut row = vec![n as f64];
            row.extend(Sequence::ALL.iter().map(|&s| table.sequence(s, n, n)[0]));
            row
        })
        .collect();
    ctx.series.push(Series::new(
        "sequences",
        &[
            "n",
            "x_minus_gap",
            "x_plus_gap",
            "y_minus",
            "y_plus",
            "delta_minus",
            "delta_plus",
            "small_delta_minus",
            "small_delta_plus",
        ],
        rows,
    ));
    let (n_minus, n_plus) = table.n_plus_minus()?;
    Ok(PartitionOut { n_max, n_minus, n_plus, fits })
}

#[derive(Debug, Clone, Serialize)]
pub struct InduceOut {
    pub first_return: CheckReport,
    pub expansion: CheckReport,
    pub distortion: DistortionReport,
    /// Relative change of D̂ between the two deepest requested depths.
    pub distortion_change: Option<f64>,
    pub separation: CheckReport,
    pub cell_measure: CheckReport,
}

pub fn induce(ctx: &mut Context) -> Result<InduceOut> {
    let c = ctx.cfg.induce.clone();
    let sampler = ctx.sampler(0);
    ctx.ensure_density()?;
    let (table, density) = ctx.parts();
    let map = table.map();
    let first_return_report = return_check(table, c.samples, &mut sampler.stream(0))?;
    let (_, n_plus) = table.n_plus_minus()?;
    let expansion =
        expansion_check(table, (n_plus.max(1), c.expansion_max_n), c.samples_per_cell, c.random_points, &mut sampler.stream(1))?;
    let distortion = distortion_check(table, BranchId::Left, &c.distortion_depths, c.points_per_cell)?;
    let distortion_change = match c.distortion_depths.as_slice() {
        [.., a, b] => distortion.relative_change(*a, *b),
        _ => None,
    };
    let separation = separation_check(map, c.separation_pairs, 50, &mut sampler.stream(2))?;
    let cell_measure = cell_measure_bound_check(table, density, c.cell_range.min(table.n_max()))?;
    let records = sampler.run(c.records, |rng, _| first_return(map, sampler.draw_base(rng, density.on_minus()).0))?;
    let rows = records
        .iter()
        .map(|r| {
            vec![r.x, r.gx, r.tau as f64, r.tau_plus as f64, r.tau_minus as f64, r.log_deriv, r.cell.m as f64, r.cell.n as f64]
        })
        .collect();
    ctx.series.push(Series::new("returns", &["x", "gx", "tau", "tau_plus", "tau_minus", "log_deriv", "m", "n"], rows));
    Ok(InduceOut { first_return: first_return_report, expansion, distortion, distortion_change, separation, cell_measure })
}

#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    pub bins: usize,
    pub h_at_zero_minus: f64,
    pub relative_change: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadSummary {
    pub samples: usize,
    pub n_cap: u64,
    pub censored: usize,
    pub fitted_exponent: f64,
    pub fit_window: (u64, u64),
    pub geometric_rate: f64,
    pub finite: bool,
    pub partial_sum_at_cap: f64,
    pub total_mass: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityOut {
    pub bins: usize,
    pub companion_bins: usize,
    pub m_max: usize,
    pub h_at_zero_minus: f64,
    pub h_at_zero_plus: f64,
    pub residual: f64,
    pub sweeps: usize,
    pub escaped_mass: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub lipschitz: f64,
    pub refinement: Option<Refinement>,
    pub spread: SpreadSummary,
    pub constants: Option<ConstantsReport>,
}

pub fn density(ctx: &mut Context) -> Result<DensityOut> {
    let c = ctx.cfg.density.clone();
    let sampler = ctx.sampler(1);
    ctx.ensure_density()?;
    let m_max = ctx.cfg.m_max();
    let (table, d) = ctx.parts();
    let refinement = if c.refine_bins > 0 {
        let fine = UlamOperator::build(table, BranchId::Left, c.refine_bins, c.refine_bins, m_max)?.stationary_density()?;
        Some(Refinement {
            bins: c.refine_bins,
            h_at_zero_minus: fine.h_at_zero_minus,
            relative_change: (fine.h_at_zero_minus / d.h_at_zero_minus - 1.0).abs(),
        })
    } else {
        None
    };
    let spread = spread_measure(table, d, &sampler, c.spread_samples, c.spread_cap, c.spread_t_min)?;
    let rows = log_grid(1, spread.n_cap as usize, 200)
        .into_iter()
        .map(|n| vec![n as f64, spread.ccdf[n], spread.partial_sum(n)])
        .collect();
    let spread_series = Series::new("return_time", &["n", "ccdf", "partial_sum"], rows);
    let mut notes = Vec::new();
    let constants = match tail_constants(table.params(), d, 1.0, 1.0) {
        Ok(c) => Some(c),
        Err(Error::ConstantDomain(msg)) => {
            notes.push(format!("tail constants unavailable: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };
    if spread.censored > 0 {
        notes.push(format!("{} of {} return times censored at {}", spread.censored, spread.samples, spread.n_cap));
    }
    let profile = |p: &PiecewiseDensity| -> Vec<Vec<f64>> { p.centers().into_iter().map(|x| vec![x, p.value_at(x)]).collect() };
    let series = [
        Series::new("density_minus", &["x", "h"], profile(d.on_minus())),
        Series::new("density_plus", &["x", "h"], profile(d.on_plus())),
        spread_series,
    ];
    let out = DensityOut {
        bins: c.bins,
        companion_bins: c.companion_bins,
        m_max,
        h_at_zero_minus: d.h_at_zero_minus,
        h_at_zero_plus: d.h_at_zero_plus,
        residual: d.residual,
        sweeps: d.sweeps,
        escaped_mass: d.escaped_mass,
        min_value: d.min_value(),
        max_value: d.max_value(),
        lipschitz: d.lipschitz_est,
        refinement,
        spread: SpreadSummary {
            samples: spread.samples,
            n_cap: spread.n_cap,
            censored: spread.censored,
            fitted_exponent: spread.fitted_exponent,
            fit_window: spread.fit_window,
            geometric_rate: spread.geometric_rate,
            finite: spread.finite,
            partial_sum_at_cap: spread.partial_sum(spread.n_cap as usize),
            total_mass: spread.total_mass,
        },
        constants,
    };
    ctx.warnings.extend(notes);
    ctx.series.extend(series);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailsOut {
    pub constants: Option<ConstantsReport>,
    pub tails: Vec<TailReport>,
    pub lemma: CheckReport,
    pub induced: InducedTailReport,
}

fn tail_series(name: String, r: &TailReport) -> Series {
    let rows = r
        .thresholds
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (lo, lo_se) = r.lower.as_ref().map_or((f64::NAN, f64::NAN), |l| (l.ccdf[i], l.std_errors[i]));
            vec![t, r.upper.ccdf[i], r.upper.std_errors[i], r.upper.theoretical[i].unwrap_or(f64::NAN), lo, lo_se]
        })
        .collect();
    Series::new(name, &["t", "upper_ccdf", "upper_std_error", "upper_theory", "lower_ccdf", "lower_std_error"], rows)
}

pub fn tails(ctx: &mut Context) -> Result<TailsOut> {
    let c = ctx.cfg.tails.clone();
    let sampler = ctx.sampler(2);
    let (lemma_sampler, induced_sampler) = (ctx.sampler(3), ctx.sampler(4));
    let thresholds: Vec<f64> = log_grid(c.t_min, c.t_max, c.points).into_iter().map(|t| t as f64).collect();
    ctx.ensure_density()?;
    let (table, d) = ctx.parts();
    let map = table.map();
    let obs = c.observable.build(map)?;
    let mut pairs = vec![(c.a, c.b)];
    pairs.extend(c.extra_pairs.iter().copied());
    let mut constants_first = None;
    let mut tails = Vec::new();
    let mut notes = Vec::new();
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let constants = match tail_constants(table.params(), d, a, b) {
            Ok(k) => Some(k),
            Err(Error::ConstantDomain(msg)) => {
                notes.push(format!("tail constants for (a, b) = ({a}, {b}) unavailable: {msg}"));
                None
            }
            Err(e) => return Err(e),
        };
        let r = tau_tail(map, d, &sampler, c.returns, a, b, &thresholds, constants.as_ref())?;
        if r.censored > 0 {
            notes.push(format!("(a, b) = ({a}, {b}): {} of {} returns censored", r.censored, r.samples));
        }
        if i == 0 {
            constants_first = constants;
        }
        tails.push(r);
    }
    let lemma = lemma_distribution_check(table, d, &lemma_sampler, c.lemma_samples, &c.lemma_t)?;
    let induced = induced_tail_check(map, d, &obs, &induced_sampler, c.induced_samples, &thresholds, c.tolerance)?;
    ctx.warnings.extend(notes);
    for (i, r) in tails.iter().enumerate() {
        let name = if i == 0 { "tail".to_string() } else { format!("tail_pair{i}") };
        ctx.series.push(tail_series(name, r));
    }
    Ok(TailsOut { constants: constants_first, tails, lemma, induced })
}

pub fn corr(ctx: &mut Context) -> Result<DecayReport> {
    ctx.require_finite("correlation decay")?;
    let c = ctx.cfg.corr.clone();
    let sampler = ctx.sampler(5);
    ctx.ensure_density()?;
    let (table, d) = ctx.parts();
    let map = table.map();
    let (phi, psi) = (c.phi.build(map)?, c.psi.build(map)?);
    let r = correlation_decay(map, d, &sampler, &phi, &psi, c.n_max, c.orbits, c.orbit_length, c.fit_window, c.slack)?;
    let rows = r.lags.iter().map(|&n| vec![n as f64, r.correlations[n], r.std_errors[n]]).collect();
    ctx.series.push(Series::new("correlations", &["n", "correlation", "std_error"], rows));
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitOut {
    pub holder: HolderConditions,
    pub diagnostics: LimitDiagnostics,
}

pub fn limit(ctx: &mut Context) -> Result<LimitOut> {
    ctx.require_finite("limit diagnostics")?;
    let c = ctx.cfg.limit.clone();
    let sampler = ctx.sampler(6);
    ctx.ensure_density()?;
    let (table, d) = ctx.parts();
    let map = table.map();
    let raw = c.observable.build(map)?;
    let obs = center_observable(table, d, &raw)?;
    let holder = holder_conditions(&obs, map.params());
    let diagnostics = limit_diagnostics(map, d, &obs, &sampler, &c.n_values, c.replicas)?;
    let needs_h = matches!(diagnostics.regime, Regime::Clt) && holder.beta_phi == 0.0;
    if needs_h && !holder.h {
        ctx.warnings.push("observable does not satisfy the Hölder condition (H)".into());
    } else if !needs_h && !holder.h_prime {
        ctx.warnings.push("observable does not satisfy the Hölder condition (H')".into());
    }
    let rows = diagnostics
        .per_n
        .iter()
        .map(|l| {
            vec![
                l.n as f64,
                l.mean,
                l.variance,
                l.ks_fitted,
                l.ks_sqrt_n_reference,
                l.ks_sqrt_n_log_n_reference,
                l.hill_upper.unwrap_or(f64::NAN),
                l.hill_lower.unwrap_or(f64::NAN),
                l.hill_pooled.unwrap_or(f64::NAN),
            ]
        })
        .collect();
    ctx.series.push(Series::new(
        "limit",
        &["n", "mean", "variance", "ks_fitted", "ks_sqrt_n", "ks_sqrt_n_log_n", "hill_upper", "hill_lower", "hill_pooled"],
        rows,
    ));
    Ok(LimitOut { holder, diagnostics })
}

pub fn lyapunov(ctx: &mut Context) -> Result<ConsistencyReport> {
    ctx.require_finite("the Lyapunov comparison")?;
    let c = ctx.cfg.lyapunov.clone();
    let sampler = ctx.sampler(7);
    ctx.ensure_density()?;
    let (table, d) = ctx.parts();
    let r = lyapunov_consistency(table, d, &sampler, c.orbits, c.min_steps)?;
    if r.boundary_stops > 0 {
        ctx.warnings.push(format!("{} of {} orbits stopped on an exact endpoint hit", r.boundary_stops, r.orbits));
    }
    Ok(r)
}

/// One pass/fail line of the consolidated report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub target: String,
}

impl CheckLine {
    fn new(name: &'static str, passed: bool, value: f64, target: impl Into<String>) -> Self {
        CheckLine { name, passed, value, target: target.into() }
    }
}

pub const EXPONENT_TOL: f64 = 0.05;
pub const CONSTANT_TOL: f64 = 0.10;
pub const DISTORTION_TOL: f64 = 0.10;
pub const DENSITY_GRID_TOL: f64 = 0.01;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const TAIL_SLOPE_TOL: f64 = 0.10;
pub const TAIL_PREFACTOR_TOL: f64 = 0.25;
pub const LEMMA_Z: f64 = 3.0;
pub const KS_TOL: f64 = 0.05;
pub const TAIL_INDEX_TOL: f64 = 0.15;
pub const LYAPUNOV_TOL: f64 = 0.02;
pub const FITTER_TOL: f64 = 1e-3;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportOut {
    pub classify: ClassifyOut,
    pub partition: PartitionOut,
    pub induce: InduceOut,
    pub density: DensityOut,
    pub tails: TailsOut,
    pub limit: Option<LimitOut>,
    pub corr: Option<DecayReport>,
    pub lyapunov: Option<ConsistencyReport>,
    pub checks: Vec<CheckLine>,
}

/// Full battery in dependency order, with pass/fail lines.
pub fn report(ctx: &mut Context) -> Result<ReportOut> {
    let classify = classify(ctx)?;
    let partition = partition(ctx)?;
    let induce = induce(ctx)?;
    let density = density(ctx)?;
    let tails = tails(ctx)?;
    let finite = classify.regime.finite;
    let limit = if finite { Some(limit(ctx)?) } else { None };
    let corr = if finite { Some(corr(ctx)?) } else { None };
    let lyapunov = if finite { Some(lyapunov(ctx)?) } else { None };

    let mut checks = Vec::new();
    let worst_exp = partition.fits.iter().map(|f| f.exponent_rel_err).fold(0.0, f64::max);
    let worst_const = partition.fits.iter().filter_map(|f| f.constant_rel_err).fold(0.0, f64::max);
    checks.push(CheckLine::new(
        "partition_asymptotics",
        worst_exp <= EXPONENT_TOL && worst_const <= CONSTANT_TOL,
        worst_exp.max(worst_const),
        format!("exponents within {EXPONENT_TOL}, constants within {CONSTANT_TOL}"),
    ));
    checks.push(CheckLine::new(
        "first_return",
        induce.first_return.passed,
        induce.first_return.violations as f64,
        "zero failures",
    ));
    checks.push(CheckLine::new("expansion", induce.expansion.passed, induce.expansion.statistic, "zero violations, min G' > 1"));
    let dc = induce.distortion_change.unwrap_or(f64::NAN);
    checks.push(CheckLine::new(
        "distortion",
        induce.distortion.finite && dc <= DISTORTION_TOL,
        dc,
        format!("finite, change between the two deepest cells <= {DISTORTION_TOL}"),
    ));
    let grid = density.refinement.as_ref().map_or(f64::NAN, |r| r.relative_change);
    checks.push(CheckLine::new(
        "density",
        density.min_value > 0.0 && grid <= DENSITY_GRID_TOL && density.residual <= RESIDUAL_TOL,
        grid,
        format!("positive, h(0-) refinement change <= {DENSITY_GRID_TOL}, residual <= {RESIDUAL_TOL:e}"),
    ));
    checks.push(CheckLine::new(
        "finiteness",
        density.spread.finite == finite,
        density.spread.fitted_exponent,
        format!("return-time tail exponent {} 1", if finite { ">" } else { "<=" }),
    ));
    let main = &tails.tails[0];
    if let (Some(p), Some(k)) = (main.upper.predicted_exponent, tails.constants.and_then(|c| c.c_tau)) {
        let slope = rel(main.upper.fitted_exponent, p);
        let pref = main.upper.pinned_constant.map_or(f64::NAN, |c| rel(c, k));
        let is_total = main.a == 1.0 && main.b == 1.0;
        checks.push(CheckLine::new(
            "return_time_tail",
            is_total && slope <= TAIL_SLOPE_TOL && pref <= TAIL_PREFACTOR_TOL,
            slope,
            format!("a = b = 1, slope within {TAIL_SLOPE_TOL}, prefactor within {TAIL_PREFACTOR_TOL}"),
        ));
    }
    for r in tails.tails.iter().filter(|r| r.a * r.b < 0.0) {
        let up = r.upper.predicted_exponent.map_or(f64::NAN, |p| rel(r.upper.fitted_exponent, p));
        let lo = r.lower.as_ref().and_then(|l| l.predicted_exponent.map(|p| rel(l.fitted_exponent, p))).unwrap_or(f64::NAN);
        checks.push(CheckLine::new(
            "mixed_tails",
            up <= TAIL_SLOPE_TOL && lo <= TAIL_SLOPE_TOL,
            up.max(lo),
            format!("both exponents within {TAIL_SLOPE_TOL}"),
        ));
    }
    checks.push(CheckLine::new(
        "return_time_distribution",
        tails.lemma.passed,
        tails.lemma.statistic,
        format!("|z| <= {LEMMA_Z}"),
    ));
    if let Some(l) = &limit {
        let d = &l.diagnostics;
        let last = d.per_n.last().unwrap();
        let line = match d.regime {
            Regime::Clt => CheckLine::new("limit_law", last.ks_fitted < KS_TOL, last.ks_fitted, format!("KS < {KS_TOL}")),
            Regime::CltNs => CheckLine::new(
                "limit_law",
                last.ks_sqrt_n_log_n_reference < last.ks_sqrt_n_reference,
                last.ks_sqrt_n_log_n_reference,
                format!("KS under sqrt(n log n) < KS under sqrt(n) = {}", last.ks_sqrt_n_reference),
            ),
            Regime::StableLaw { alpha } => {
                let fitted = d.tail_index_fit.unwrap_or(f64::NAN);
                CheckLine::new(
                    "limit_law",
                    rel(fitted, alpha) <= TAIL_INDEX_TOL,
                    fitted,
                    format!("{alpha} within {TAIL_INDEX_TOL}"),
                )
            }
        };
        checks.push(line);
    }
    if let Some(c) = &corr {
        checks.push(CheckLine::new(
            "correlation_decay",
            c.passed,
            c.fitted_exponent,
            match c.bound_rate {
                Some(r) => format!(">= {} x {r}", ctx.cfg.corr.slack),
                None => "exponential".to_string(),
            },
        ));
    }
    if let Some(l) = &lyapunov {
        checks.push(CheckLine::new(
            "lyapunov",
            l.relative_difference <= LYAPUNOV_TOL,
            l.relative_difference,
            format!("<= {LYAPUNOV_TOL}"),
        ));
    }
    let fitter = fitter_self_test()?;
    checks.push(CheckLine::new("fitter_self_test", fitter <= FITTER_TOL, fitter, format!("<= {FITTER_TOL}")));

    Ok(ReportOut { classify, partition, induce, density, tails, limit, corr, lyapunov, checks })
}

/// Worst relative exponent error on exact synthetic power laws.
pub fn fitter_self_test() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in [-0.5, -4.0 / 3.0, -2.0, -3.5] {
        let xs: Vec<f64> = (10..=1000).map(|n| n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x.powf(p)).collect();
        let (q, _, _) = fit::power_law(&xs, &ys)?;
        worst = worst.max(rel(q, p));
    }
    Ok(worst)
}
