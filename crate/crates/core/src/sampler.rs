//! Seeded Monte Carlo over independent orbits.
//!
//! Work is cut into fixed-size chunks; chunk `c` draws from ChaCha8 stream `c`
//! of the seed, so results do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::MapModel;
use crate::measure::PiecewiseDensity;
use crate::point::Point;

/// Iterations of g discarded before a stationary orbit is measured.
pub const BURN_IN: usize = 1000;
pub const DEFAULT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    /// Inverse-CDF draw from the binned density.
    InverseCdf,
    /// Uniform draw on the base, carrying weight h(x)·|Δ₀|.
    LebesgueReweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitSampler {
    pub seed: u64,
    pub law: InitialLaw,
    pub workers: usize,
    pub chunk: usize,
}

impl OrbitSampler {
    pub fn new(seed: u64) -> Self {
        OrbitSampler { seed, law: InitialLaw::InverseCdf, workers: 1, chunk: DEFAULT_CHUNK }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_law(mut self, law: InitialLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }

    /// Generator for chunk `c`.
    pub fn stream(&self, c: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(c);
        rng
    }

    /// Evaluates `f(rng, i)` for i in 0..n and returns the results in index order.
    pub fn run<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, usize) -> Result<T> + Sync,
    {
        let chunks = n.div_ceil(self.chunk);
        let one = |c: usize| -> Result<Vec<T>> {
            let mut rng = self.stream(c as u64);
            let lo = c * self.chunk;
            let hi = (lo + self.chunk).min(n);
            (lo..hi).map(|i| f(&mut rng, i)).collect()
        };
        let parts: Vec<Vec<T>> = if self.workers <= 1 {
            (0..chunks).map(one).collect::<Result<_>>()?
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
            pool.install(|| (0..chunks).into_par_iter().map(one).collect::<Result<_>>())?
        };
        Ok(parts.into_iter().flatten().collect())
    }

    /// A point of the density's open domain and its importance weight.
    pub fn draw_base<R: Rng>(&self, rng: &mut R, density: &PiecewiseDensity) -> (Point, f64) {
        let (lo, hi) = density.domain();
        loop {
            let (x, w) = match self.law {
                InitialLaw::InverseCdf => (density.quantile(rng.gen::<f64>()), 1.0),
                InitialLaw::LebesgueReweighted => {
                    let x = rng.gen_range(lo..hi);
                    (x, density.value_at(x) * (hi - lo))
                }
            };
            if x > lo && x < hi && x != 0.0 {
                return (Point::new(x), w);
            }
        }
    }

    /// Base draw followed by `burn_in` iterations of g.
    pub fn draw_stationary<R: Rng>(
        &self,
        rng: &mut R,
        map: &MapModel,
        density: &PiecewiseDensity,
        burn_in: usize,
    ) -> (Point, f64) {
        let (mut p, w) = self.draw_base(rng, density);
        for _ in 0..burn_in {
            p = map.apply(p);
        }
        (p, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_do_not_depend_on_workers() {
        let f = |rng: &mut ChaCha8Rng, i: usize| Ok(rng.gen::<u64>() ^ i as u64);
        let a = OrbitSampler::new(3).with_chunk(7).run(100, f).unwrap();
        let b = OrbitSampler::new(3).with_chunk(7).with_workers(4).run(100, f).unwrap();
        assert_eq!(a, b);
        let c = OrbitSampler::new(4).with_chunk(7).run(100, f).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn reweighted_draws_have_unit_mean_weight() {
        let d = PiecewiseDensity::from_masses(vec![-1.0, -0.5, 0.0], &[0.8, 0.2]);
        let s = OrbitSampler::new(1).with_law(InitialLaw::LebesgueReweighted);
        let mut rng = s.stream(0);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| s.draw_base(&mut rng, &d).1).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }
}
