use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use twinmap::induced::{first_return, in_base};
use twinmap::partition::PartitionTable;
use twinmap::{BranchId, Error, MapModel, MapParams, Point};

fn params() -> impl Strategy<Value = MapParams> {
    (0.0..1.2f64, 0.0..1.2f64, 1.1..3.0f64, 1.1..3.0f64, 0.5..3.0f64, 0.5..3.0f64, 0.5..3.0f64, 0.5..3.0f64)
        .prop_map(|(l1, l2, k1, k2, a1, a2, b1, b2)| MapParams::new(l1, l2, k1, k2, a1, a2, b1, b2))
}

/// `None` for the parameter sets the construction rejects by design.
fn build(p: MapParams) -> Option<MapModel> {
    match MapModel::build(p) {
        Ok(m) => Some(m),
        Err(Error::NonMonotone { .. } | Error::SpuriousFixedPoint { .. } | Error::ExpansionFailure { .. }) => None,
        Err(e) => panic!("{p:?}: {e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn branch_inverse_round_trips(p in params(), ys in prop::collection::vec(-1.0..1.0f64, 16)) {
        let map = build(p);
        prop_assume!(map.is_some());
        let map = map.unwrap();
        for y in ys {
            for branch in [BranchId::Left, BranchId::Right] {
                let x = map.inverse(branch, Point::new(y)).unwrap();
                prop_assert_eq!(x.branch(), branch);
                let back = map.apply(x).x();
                prop_assert!((back - y).abs() <= 1e-12, "{:?} y = {} back = {}", branch, y, back);
            }
        }
    }

    #[test]
    fn branches_increase(p in params(), mut xs in prop::collection::vec(-1.0..1.0f64, 32)) {
        let map = build(p);
        prop_assume!(map.is_some());
        let map = map.unwrap();
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            let (a, b) = (Point::new(w[0]), Point::new(w[1]));
            if a.branch() == b.branch() && w[0] < w[1] {
                prop_assert!(map.apply(a).x() <= map.apply(b).x());
            }
        }
        for &x in &xs {
            if x != 0.0 {
                prop_assert!(map.slope(Point::new(x)) >= 0.0);
            }
        }
    }

    #[test]
    fn fixed_points_are_neutral(p in params()) {
        let map = build(p);
        prop_assume!(map.is_some());
        let map = map.unwrap();
        prop_assert_eq!(map.apply(Point::from_lower_gap(0.0)).lower_gap(), 0.0);
        prop_assert_eq!(map.apply(Point::from_upper_gap(0.0)).upper_gap(), 0.0);
    }

    #[test]
    fn partition_points_are_ordered(p in params()) {
        let map = build(p);
        prop_assume!(map.is_some());
        let table = match PartitionTable::compute(Arc::new(map.unwrap()), 200) {
            Ok(t) => t,
            Err(Error::ExpansionFailure { .. }) => return Err(TestCaseError::reject("induced map not expanding")),
            Err(e) => panic!("{p:?}: {e}"),
        };
        let xm = table.x_minus_gaps();
        let xp = table.x_plus_gaps();
        prop_assert!(xm.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(xp.windows(2).all(|w| w[1] < w[0]));
        let ym = table.y_minus_values();
        let yp = table.y_plus_values();
        prop_assert!(ym.windows(2).all(|w| w[0] < w[1] && w[1] < 0.0));
        prop_assert!(yp.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0));
    }

    #[test]
    fn first_return_splits_excursion(u in 0.001..0.999f64) {
        static MAP: OnceLock<MapModel> = OnceLock::new();
        let map = MAP.get_or_init(|| MapModel::build(MapParams::reference()).unwrap());
        let lo = map.x0_minus().x();
        let x = Point::new(lo * (1.0 - u));
        let r = first_return(map, x).unwrap();
        prop_assert_eq!(r.tau, r.tau_plus + r.tau_minus);
        prop_assert!(in_base(map, BranchId::Left, r.image));
        prop_assert!(r.log_deriv > 0.0);
    }
}
