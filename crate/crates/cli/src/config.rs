use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twinmap::observable::{Expr, Observable};
use twinmap::{MapModel, MapParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Classify,
    Partition,
    Induce,
    Density,
    Tails,
    Corr,
    Limit,
    Lyapunov,
    Report,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Classify => "classify",
            Experiment::Partition => "partition",
            Experiment::Induce => "induce",
            Experiment::Density => "density",
            Experiment::Tails => "tails",
            Experiment::Corr => "corr",
            Experiment::Limit => "limit",
            Experiment::Lyapunov => "lyapunov",
            Experiment::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapParams,
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub induce: InduceConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub tails: TailsConfig,
    #[serde(default)]
    pub corr: CorrConfig,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    /// Table depth; defaults to 10⁵ for power-law tables and 300 otherwise.
    pub n_max: Option<usize>,
    /// Fit window; defaults to the last decade of the table.
    pub window: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InduceConfig {
    pub samples: usize,
    pub expansion_max_n: usize,
    pub samples_per_cell: usize,
    pub random_points: usize,
    pub distortion_depths: Vec<usize>,
    pub points_per_cell: usize,
    pub separation_pairs: usize,
    pub cell_range: usize,
    pub records: usize,
}

impl Default for InduceConfig {
    fn default() -> Self {
        InduceConfig {
            samples: 10_000,
            expansion_max_n: 200,
            samples_per_cell: 50,
            random_points: 10_000,
            distortion_depths: vec![10, 25, 50, 100],
            points_per_cell: 12,
            separation_pairs: 200,
            cell_range: 64,
            records: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub bins: usize,
    pub companion_bins: usize,
    /// Second, finer bin count for the convergence check; 0 disables it.
    pub refine_bins: usize,
    pub m_max: Option<usize>,
    pub table_depth: Option<usize>,
    pub spread_samples: usize,
    pub spread_cap: u64,
    pub spread_t_min: u64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            bins: 2048,
            companion_bins: 2048,
            refine_bins: 4096,
            m_max: None,
            table_depth: None,
            spread_samples: 100_000,
            spread_cap: 100_000,
            spread_t_min: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailsConfig {
    pub returns: usize,
    pub a: f64,
    pub b: f64,
    pub t_min: usize,
    pub t_max: usize,
    pub points: usize,
    /// Further (a, b) pairs, typically of mixed sign.
    pub extra_pairs: Vec<(f64, f64)>,
    pub lemma_t: Vec<u64>,
    pub lemma_samples: usize,
    pub observable: ObservableSpec,
    pub induced_samples: usize,
    pub tolerance: f64,
}

impl Default for TailsConfig {
    fn default() -> Self {
        TailsConfig {
            returns: 1_000_000,
            a: 1.0,
            b: 1.0,
            t_min: 10,
            t_max: 1000,
            points: 20,
            extra_pairs: vec![(1.0, -1.0)],
            lemma_t: vec![10, 30, 100],
            lemma_samples: 200_000,
            observable: ObservableSpec::Uniform { expr: "x".parse().unwrap(), holder: None },
            induced_samples: 1_000_000,
            tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrConfig {
    pub phi: ObservableSpec,
    pub psi: ObservableSpec,
    pub n_max: usize,
    pub orbits: usize,
    pub orbit_length: usize,
    pub fit_window: (usize, usize),
    pub slack: f64,
}

impl Default for CorrConfig {
    fn default() -> Self {
        let x = ObservableSpec::Uniform { expr: "x".parse().unwrap(), holder: None };
        CorrConfig { phi: x.clone(), psi: x, n_max: 200, orbits: 1000, orbit_length: 10_000, fit_window: (10, 200), slack: 0.8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitConfig {
    pub observable: ObservableSpec,
    pub n_values: Vec<usize>,
    pub replicas: usize,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            observable: ObservableSpec::Uniform { expr: "x*(1+x)*(1-x)".parse().unwrap(), holder: None },
            n_values: vec![100, 1000, 10_000],
            replicas: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub orbits: usize,
    pub min_steps: u64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig { orbits: 100, min_steps: 2_000_000 }
    }
}

/// Observable as written in a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    Uniform { expr: Expr, holder: Option<(f64, f64)> },
    Piecewise { left: Expr, right: Expr, holder: Option<(f64, f64)> },
    Constant { value: f64 },
    LogDerivative,
    Coboundary { left: Expr, right: Expr },
    IndicatorPlus,
}

impl ObservableSpec {
    pub fn build(&self, map: &MapModel) -> twinmap::Result<Observable> {
        let with = |o: Observable, h: &Option<(f64, f64)>| match h {
            Some((a, b)) => o.with_holder(*a, *b),
            None => o,
        };
        let obs = match self {
            ObservableSpec::Uniform { expr, holder } => with(Observable::uniform(expr.clone()), holder),
            ObservableSpec::Piecewise { left, right, holder } => with(Observable::piecewise(left.clone(), right.clone()), holder),
            ObservableSpec::Constant { value } => Observable::constant(*value),
            ObservableSpec::LogDerivative => Observable::log_derivative(map),
            ObservableSpec::Coboundary { left, right } => Observable::coboundary(left.clone(), right.clone()),
            ObservableSpec::IndicatorPlus => Observable::indicator_plus(),
        };
        obs.validate(map)?;
        Ok(obs)
    }
}

/// Reads TOML or JSON according to the file extension.
pub fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display())),
        Some("json") => serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display())),
        _ => Err(format!("{}: expected a .toml or .json file", path.display())),
    }
}

impl ExperimentConfig {
    fn power_law(&self) -> bool {
        self.map.ell1 > 0.0 && self.map.ell2 > 0.0
    }

    pub fn partition_depth(&self) -> usize {
        self.partition.n_max.unwrap_or(if self.power_law() { 100_000 } else { 300 })
    }

    pub fn density_depth(&self) -> usize {
        self.density.table_depth.unwrap_or(if self.power_law() { 5000 } else { 300 })
    }

    pub fn m_max(&self) -> usize {
        self.density.m_max.unwrap_or(400.min(self.density_depth()))
    }

    /// Fills in every default so the report records exactly what ran.
    pub fn resolve(mut self) -> Self {
        self.partition.n_max = Some(self.partition_depth());
        self.density.table_depth = Some(self.density_depth());
        self.density.m_max = Some(self.m_max());
        self
    }
}
