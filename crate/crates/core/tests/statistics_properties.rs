use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use twinmap::fit;
use twinmap::measure::{DensityEstimate, UlamOperator};
use twinmap::observable::{Expr, Observable};
use twinmap::partition::PartitionTable;
use twinmap::sampler::OrbitSampler;
use twinmap::statistics::{beta_phi, correlation_decay, induced_observable, weighted_ccdf};
use twinmap::{BranchId, MapModel, MapParams, Point};

fn reference() -> &'static (PartitionTable, DensityEstimate) {
    static CELL: OnceLock<(PartitionTable, DensityEstimate)> = OnceLock::new();
    CELL.get_or_init(|| {
        let map = Arc::new(MapModel::build(MapParams::reference()).unwrap());
        let table = PartitionTable::compute(map, 2000).unwrap();
        let d = UlamOperator::build(&table, BranchId::Left, 512, 512, 400).unwrap().stationary_density().unwrap();
        (table, d)
    })
}

fn base_point(u: f64) -> Point {
    let (table, _) = reference();
    Point::new(table.map().x0_minus().x() * (1.0 - u))
}

fn affine(c: f64, d: f64) -> Observable {
    Observable::uniform(format!("{c}*x + {d}").parse::<Expr>().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_law_fit_is_exact(c in 0.01..100.0f64, q in -4.0..-0.1f64, lo in 1usize..50, span in 20usize..2000) {
        let xs: Vec<f64> = (lo..lo + span).map(|n| n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(q)).collect();
        let (fq, fc, line) = fit::power_law(&xs, &ys).unwrap();
        prop_assert!((fq / q - 1.0).abs() < 1e-3);
        prop_assert!((fc / c - 1.0).abs() < 1e-3);
        prop_assert!(line.r_squared > 0.999_999);
    }

    #[test]
    fn ccdf_is_monotone_and_bounded(
        values in prop::collection::vec((0.0..100.0f64, 0.1..2.0f64), 1..300),
        mut thresholds in prop::collection::vec(-1.0..120.0f64, 1..20),
    ) {
        thresholds.sort_by(f64::total_cmp);
        let (p, se, counts) = weighted_ccdf(&values, &thresholds);
        for i in 0..p.len() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p[i]));
            prop_assert!(se[i] >= 0.0);
            if i > 0 {
                prop_assert!(p[i] <= p[i - 1] + 1e-12);
                prop_assert!(counts[i] <= counts[i - 1]);
            }
        }
        if thresholds[0] < 0.0 {
            prop_assert!((p[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ccdf_error_halves_with_four_copies(values in prop::collection::vec((0.0..10.0f64, 0.5..1.5f64), 2..100), t in 0.0..10.0f64) {
        let (p1, se1, _) = weighted_ccdf(&values, &[t]);
        let copies: Vec<(f64, f64)> = values.iter().flat_map(|&v| std::iter::repeat_n(v, 4)).collect();
        let (p4, se4, _) = weighted_ccdf(&copies, &[t]);
        prop_assert!((p1[0] - p4[0]).abs() < 1e-12);
        prop_assert!((se4[0] - 0.5 * se1[0]).abs() <= 1e-12 + 1e-9 * se1[0]);
    }

    #[test]
    fn beta_phi_ignores_scale(c in -3.0..3.0f64, d in -3.0..3.0f64, s in 0.1..10.0f64, l1 in 0.1..1.0f64, l2 in 0.1..1.0f64) {
        let p = MapParams::new(l1, l2, 1.5, 2.0, 1.0, 1.0, 1.0, 1.0);
        let b = beta_phi(&affine(c, d), &p);
        prop_assert_eq!(b, beta_phi(&affine(s * c, s * d), &p));
        prop_assert_eq!(b, beta_phi(&affine(-s * c, -s * d), &p));
        prop_assert!([0.0, p.beta1(), p.beta2(), p.beta()].contains(&b));
    }

    #[test]
    fn induced_sums_split_exactly(u in 0.001..0.999f64, c in -2.0..2.0f64, d in -2.0..2.0f64) {
        let (table, _) = reference();
        let map = table.map();
        let x = base_point(u);
        let one = induced_observable(map, &Observable::constant(1.0), x).unwrap();
        prop_assert_eq!(one.phi_sum, one.tau as f64);
        prop_assert_eq!(one.tau, one.tau_plus + one.tau_minus);
        let ind = induced_observable(map, &Observable::indicator_plus(), x).unwrap();
        prop_assert_eq!(ind.phi_sum, ind.tau_plus as f64);
        let v = induced_observable(map, &affine(c, d), x).unwrap();
        prop_assert!(v.residual.abs() <= 1e-9 * (1.0 + v.phi_sum.abs()));
        prop_assert_eq!(v.tau_ab, (c + d) * v.tau_plus as f64 + (d - c) * v.tau_minus as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampler_output_ignores_worker_count(seed in any::<u64>(), n in 1usize..2000, workers in 2usize..5) {
        let draw = |s: OrbitSampler| s.run(n, |rng, i| Ok((i, rand::Rng::gen::<u64>(rng)))).unwrap();
        let one = draw(OrbitSampler::new(seed).with_workers(1));
        prop_assert_eq!(&one, &draw(OrbitSampler::new(seed).with_workers(workers)));
        prop_assert!(one.iter().enumerate().all(|(i, (j, _))| i == *j));
        prop_assert_ne!(one, draw(OrbitSampler::new(seed.wrapping_add(1)).with_workers(1)));
    }

    #[test]
    fn constant_observable_has_no_correlation(k in -5.0..5.0f64, seed in 0u64..1000) {
        let (table, d) = reference();
        let sampler = OrbitSampler::new(seed);
        let r = correlation_decay(table.map(), d, &sampler, &Observable::constant(k), &affine(1.0, 0.0), 10, 8, 200, (1, 10), 0.8).unwrap();
        prop_assert!(r.correlations.iter().all(|c| c.abs() < 1e-12), "{:?}", r.correlations);
    }
}
