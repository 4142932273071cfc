use std::sync::Arc;

use proptest::prelude::*;

use hybridqvi::finite::TimeGrid;
use hybridqvi::fixtures;
use hybridqvi::geometry::Region;
use hybridqvi::grid::{ChartAxes, TimeStamp};
use hybridqvi::operators::argmin;
use hybridqvi::scalar::distance;
use hybridqvi::stationary::Discretization;
use hybridqvi::verification::{fitted_order, refinement_levels};
use hybridqvi::{Grid, GridSpec, HybridState, ValueField};

fn plane_grid() -> Arc<Grid<f64>> {
    Arc::new(
        Grid::from_axes(vec![ChartAxes {
            lo: vec![-1.0, 0.0],
            spacing: vec![0.25, 0.5],
            counts: vec![9, 5],
        }])
        .unwrap(),
    )
}

fn region() -> impl Strategy<Value = Region<f64>> {
    prop_oneof![
        (-2.0..2.0f64, -2.0..2.0f64, 0.1..2.0f64).prop_map(|(a, b, r)| Region::ball(vec![a, b], r)),
        (-2.0..0.0f64, -2.0..0.0f64, 0.1..2.0f64, 0.1..2.0f64)
            .prop_map(|(a, b, w, h)| Region::cuboid(vec![a, b], vec![a + w, b + h])),
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero normal", |(a, b, _)| a.abs() + b.abs() > 0.1)
            .prop_map(|(a, b, c)| Region::half_space(vec![a, b], c)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn signed_distance_is_one_lipschitz(r in region(), x in prop::array::uniform2(-4.0..4.0f64), z in prop::array::uniform2(-4.0..4.0f64)) {
        let d = distance(&x, &z);
        prop_assert!((r.sd(&x) - r.sd(&z)).abs() <= d * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn interpolation_reproduces_affine_functions(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
                                                  x in -1.0..1.0f64, y in 0.0..2.0f64) {
        let grid = plane_grid();
        let f = ValueField::from_fn(grid, TimeStamp::Stationary, |s| a * s.coords[0] + b * s.coords[1] + c);
        let v = f.interpolate(&HybridState::new(0, vec![x, y]));
        prop_assert!((v - (a * x + b * y + c)).abs() <= 1e-12);
    }

    #[test]
    fn interpolation_stays_within_node_range(values in prop::collection::vec(-5.0..5.0f64, 45),
                                             x in -3.0..3.0f64, y in -2.0..4.0f64) {
        let f = ValueField { grid: plane_grid(), values: values.clone(), stamp: TimeStamp::Stationary };
        let v = f.interpolate(&HybridState::new(0, vec![x, y]));
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn value_files_round_trip(values in prop::collection::vec(-1e6..1e6f64, 45), t in 0.0..10.0f64) {
        let f = ValueField { grid: plane_grid(), values, stamp: TimeStamp::Slice(t) };
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let back = ValueField::read_csv(f.grid.clone(), f.stamp, csv.as_slice()).unwrap();
        prop_assert_eq!(&back.values, &f.values);
        let mut bin = Vec::new();
        f.write_binary(&mut bin).unwrap();
        let back = ValueField::<f64>::read_binary(bin.as_slice()).unwrap();
        prop_assert_eq!(back.values, f.values);
        prop_assert_eq!(back.stamp, TimeStamp::Slice(t));
    }

    #[test]
    fn sweep_is_monotone_and_shift_bounded(seed_values in prop::collection::vec(0.0..4.0f64, 8),
                                           bump in 0.0..1.0f64, c in 0.0..2.0f64) {
        for m in [fixtures::conveyor::<f64>(), fixtures::attractor(), fixtures::two_chart()] {
            let disc = Discretization::build(&m, &GridSpec::new(0.1), None).unwrap();
            let n = disc.grid.len();
            let lo: Vec<f64> = (0..n).map(|i| seed_values[i % 8] * (1.0 + (i as f64).sin().abs())).collect();
            let hi: Vec<f64> = lo.iter().enumerate().map(|(i, v)| v + bump * ((i % 3) as f64)).collect();
            let shifted: Vec<f64> = lo.iter().map(|v| v + c).collect();
            let (tl, th, ts) = (disc.sweep_values(&lo), disc.sweep_values(&hi), disc.sweep_values(&shifted));
            let gamma = disc.plan.discount;
            for i in 0..n {
                prop_assert!(tl[i] <= th[i]);
                let d = ts[i] - tl[i];
                prop_assert!(d >= gamma * c - 1e-12 && d <= c + 1e-12);
            }
        }
    }

    #[test]
    fn time_grid_ends_exactly_at_horizon(horizon in 0.01..50.0f64, steps in 1usize..5000) {
        let tg = TimeGrid::new(horizon, steps).unwrap();
        prop_assert_eq!(tg.time(steps), horizon);
        prop_assert_eq!(tg.time(0), 0.0);
        prop_assert!((0..steps).all(|n| tg.time(n) < tg.time(n + 1)));
    }

    #[test]
    fn fitted_order_recovers_power_laws(c in 0.01..100.0f64, p in 0.3..4.0f64, h0 in 0.01..1.0f64) {
        let levels = refinement_levels(h0, h0, 4);
        let errors: Vec<f64> = levels.iter().map(|(h, _)| c * h.powf(p)).collect();
        prop_assert!((fitted_order(&levels, &errors) - p).abs() < 1e-9);
    }

    #[test]
    fn argmin_prefers_first_of_ties(values in prop::collection::vec(prop_oneof![Just(1.0f64), Just(2.0), Just(f64::NAN)], 1..12)) {
        let choice = argmin(values.iter().cloned().enumerate());
        let finite_min = values.iter().cloned().filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min);
        match choice {
            Some(c) if finite_min.is_finite() => {
                prop_assert_eq!(c.value, finite_min);
                prop_assert_eq!(c.index, values.iter().position(|v| *v == finite_min).unwrap());
            }
            Some(c) => prop_assert!(c.value.is_nan()),
            None => prop_assert!(values.is_empty()),
        }
    }
}
