use serde_json::json;

use hybridqvi::fixtures;
use hybridqvi::stationary::{solve_stationary, SolverConfig};
use hybridqvi::trajectory::{simulate, ExplicitStrategy, Horizon, PolicyStrategy, SimConfig};
use hybridqvi::verification::{refinement_levels, run_convergence_finite};
use hybridqvi::{GridSpec, HybridModel, HybridState, ModelF32, ModelF64, StateF32};

/// Conveyor value computed independently: the first payment is at the
/// hitting time `2 - x`, then every 1.5 time units.
fn conveyor_oracle(x: f64) -> f64 {
    let first = (2.0 - x).max(0.0);
    (0..4000).map(|n| (-(first + 1.5 * n as f64)).exp()).sum()
}

#[test]
fn constant_cost_error_equals_discretization_gap() {
    let m: ModelF64 = fixtures::constant_cost();
    for dt in [0.2, 0.05, 0.01] {
        let config = SolverConfig {
            dt: Some(dt),
            tol: 1e-12,
            max_iter: 1_000_000,
            validate: true,
        };
        let (v, _, _) = solve_stationary(&m, &GridSpec::new(0.25), &config).unwrap();
        let gap = (dt / (1.0 - (-dt).exp()) - 1.0).abs();
        for x in &v.values {
            assert!((x - 1.0).abs() <= gap + 1e-10, "dt {dt}: {x}");
        }
    }
}

#[test]
fn conveyor_values_match_series_everywhere() {
    let m: ModelF64 = fixtures::conveyor();
    let h = 0.025;
    let (v, _, diag) = solve_stationary(&m, &GridSpec::new(h), &SolverConfig::default()).unwrap();
    let tol = (2.0 * h).max(2.0 * diag.dt);
    for n in 0..v.grid.len() {
        let s = v.grid.state(n);
        assert!(
            (v.values[n] - conveyor_oracle(s.coords[0])).abs() <= tol,
            "x = {}",
            s.coords[0]
        );
    }
}

#[test]
fn conveyor_trajectory_cost_is_the_series() {
    let m: ModelF64 = fixtures::conveyor();
    for x0 in [0.0, 0.5, 1.7, 2.5] {
        let mut s = ExplicitStrategy::default();
        s.bind(&m);
        let rec = simulate(
            &m,
            &HybridState::new(0, vec![x0]),
            &mut s,
            Horizon::Stationary { tail_tol: 1e-10 },
            &SimConfig::default(),
        )
        .unwrap();
        assert!(
            (rec.total_cost - conveyor_oracle(x0)).abs() < 1e-8,
            "x0 = {x0}: {}",
            rec.total_cost
        );
        assert!((rec.ledger_total() - rec.total_cost).abs() < 1e-12);
    }
}

#[test]
fn finite_horizon_characteristics() {
    // V(0, x) = h(x + T) for f ≡ 1, K ≡ 0, no jumps
    let m: ModelF64 = HybridModel::from_value(json!({
        "charts": [{"dim": 1, "domain": {"type": "box", "lo": [-1.0], "hi": [3.0]}}],
        "controls": {"u": [[0.0]]},
        "dynamics": ["1"],
        "costs": {"running": "0", "terminal": "sin(x1)"},
        "constants": {"lambda": 1.0, "F": 1.0, "L": 1.0, "beta": 1.0, "xi0": 0.25, "R": 1.0, "C_prime": 1.0}
    }))
    .unwrap();
    let horizon = 0.5;
    let oracle = |s: &HybridState<f64>| (s.coords[0] + horizon).sin();
    let keep = |s: &HybridState<f64>| s.coords[0] <= 2.0;
    let levels = refinement_levels(0.1, 0.0025, 4);
    let study = run_convergence_finite(&m, &oracle, &keep, &levels, Some(4.0), horizon).unwrap();
    assert!(study.errors.windows(2).all(|w| w[1] < w[0]), "{study:?}");
    assert!(study.empirical_order >= 0.8, "{study:?}");
}

#[test]
fn single_precision_solve_tracks_double() {
    let m64: ModelF64 = fixtures::conveyor();
    let m32: ModelF32 = fixtures::conveyor();
    let spec64 = GridSpec::new(0.05);
    let spec32 = GridSpec::new(0.05f32);
    let (v64, _, _) = solve_stationary(&m64, &spec64, &SolverConfig::default()).unwrap();
    let config32 = SolverConfig {
        tol: 1e-4f32,
        ..SolverConfig::default()
    };
    let (v32, policy32, _) = solve_stationary(&m32, &spec32, &config32).unwrap();
    assert_eq!(v32.values.len(), v64.values.len());
    for (a, b) in v32.values.iter().zip(&v64.values) {
        assert!((*a as f64 - b).abs() < 1e-3);
    }
    let x0: StateF32 = HybridState::new(0, vec![0.5]);
    let mut strategy = PolicyStrategy::stationary(&policy32);
    let rec = simulate(
        &m32,
        &x0,
        &mut strategy,
        Horizon::Stationary { tail_tol: 1e-4 },
        &SimConfig::default(),
    )
    .unwrap();
    assert!((rec.total_cost as f64 - conveyor_oracle(0.5)).abs() < 1e-3);
}
