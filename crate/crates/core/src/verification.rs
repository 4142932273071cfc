//! Executable property suites and grid-convergence studies.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::finite::{solve_finite, terminal_consistency_check, FiniteConfig};
use crate::geometry::{random_direction, Region};
use crate::grid::{destination_nodes, Grid, GridSpec, NodeTag, ValueField};
use crate::model::{ChartId, HybridModel, HybridState};
use crate::operators::{hamiltonian_stationary, hamiltonian_time};
use crate::scalar::{distance, sup_diff, Scalar};
use crate::stationary::{iterate, solve_stationary, Discretization, SolverConfig};
use crate::trajectory::{
    flow, integrate_arc, simulate, ArcOptions, ExplicitStrategy, Horizon, PolicyStrategy, SimConfig,
};
use crate::validate::{validate_model_with, ValidationConfig};

/// One named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Slack of the worst case: `bound - observed`, negative on failure.
    pub margin: f64,
    pub witness: Option<String>,
}

impl PropertyCheck {
    pub fn new(name: &str, margin: f64, witness: Option<String>) -> Self {
        Self {
            name: name.to_string(),
            passed: margin >= 0.0,
            margin,
            witness,
        }
    }

    pub fn flag(name: &str, passed: bool, margin: f64, witness: Option<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            margin,
            witness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    fn new(suite: &str, seed: u64) -> Self {
        Self {
            suite: suite.to_string(),
            seed,
            checks: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, c: PropertyCheck) {
        self.checks.push(c);
    }

    /// Fixed-width table, one row per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<14} {:<34} {:<4} {:>12.4e}\n",
                self.suite,
                c.name,
                if c.passed { "ok" } else { "FAIL" },
                c.margin
            ));
        }
        out
    }
}

/// Tracks the worst margin and its witness.
struct Worst {
    margin: f64,
    witness: Option<String>,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            witness: None,
        }
    }

    fn see(&mut self, margin: f64, witness: impl FnOnce() -> String) {
        if margin < self.margin || margin.is_nan() {
            self.margin = margin;
            self.witness = Some(witness());
        }
    }

    fn check(self, name: &str) -> PropertyCheck {
        let m = if self.margin == f64::INFINITY { 0.0 } else { self.margin };
        PropertyCheck::new(name, m, self.witness)
    }
}

/// Random states inside chart domains, truncated to the model window.
pub fn sample_states<S: Scalar>(model: &HybridModel<S>, rng: &mut ChaCha8Rng, count: usize) -> Vec<HybridState<S>> {
    let radius = model.default_trunc_radius();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 100 {
        attempts += 1;
        let chart = ChartId(rng.random_range(0..model.chart_count()));
        let (lo, hi) = model.window(chart, radius);
        let x: Vec<S> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| {
                if b > a {
                    S::lit(rng.random_range(a.as_f64()..b.as_f64()))
                } else {
                    a
                }
            })
            .collect();
        if model.sd_domain(chart, &x) <= S::zero() {
            out.push(HybridState { chart, coords: x });
        }
    }
    out
}

fn fmt_state<S: Scalar>(s: &HybridState<S>) -> String {
    let xs: Vec<String> = s.coords.iter().map(|v| format!("{:.6}", v.as_f64())).collect();
    format!("chart {} x = ({})", s.chart.0, xs.join(", "))
}

// ---------------------------------------------------------------- audit

/// Assumption audit plus the geometric invariants of region primitives.
pub fn run_assumption_audit<S: Scalar>(model: &HybridModel<S>, samples: usize, seed: u64) -> PropertyReport {
    let mut report = PropertyReport::new("audit", seed);
    let config = ValidationConfig {
        samples,
        seed,
        ..ValidationConfig::default()
    };
    let v = validate_model_with(model, &config);
    for e in &v.entries {
        report.push(PropertyCheck::flag(&e.name, e.passed, e.margin, e.witness.clone()));
    }
    let again = validate_model_with(model, &config);
    report.push(PropertyCheck::flag("audit_deterministic", again == v, 0.0, None));

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e0);
    let radius = model.default_trunc_radius();
    let mut lip = Worst::new();
    let mut normals = Worst::new();
    for (i, chart) in model.charts.iter().enumerate() {
        let (lo, hi) = model.window(ChartId(i), radius);
        let regions: Vec<&Region<S>> = [
            Some(&chart.domain),
            chart.autonomous.as_ref(),
            chart.controlled.as_ref(),
            chart.destination.as_ref(),
        ]
        .into_iter()
        .flatten()
        .flat_map(|r| r.primitives())
        .collect();
        for region in regions {
            for _ in 0..samples {
                let a: Vec<S> = lo.iter().zip(&hi).map(|(&l, &h)| uniform(&mut rng, l, h)).collect();
                let b: Vec<S> = lo.iter().zip(&hi).map(|(&l, &h)| uniform(&mut rng, l, h)).collect();
                let d = distance(&a, &b);
                if d > S::zero() {
                    let ratio = ((region.sd(&a) - region.sd(&b)).abs() / d).as_f64();
                    lip.see(1.0 + 1e-12 - ratio, || format!("ratio {ratio:.6} on chart {i}"));
                }
            }
            let window = (lo.as_slice(), hi.as_slice());
            for p in region.sample_boundary(&mut rng, samples, window) {
                if !matches!(region, Region::Ball { .. } | Region::HalfSpace { .. }) && !box_face_interior(region, &p) {
                    continue;
                }
                let Ok(n) = region.outward_normal(&p, S::lit(1e-7)) else {
                    continue;
                };
                let h = 1e-6;
                let g: Vec<f64> = (0..p.len())
                    .map(|k| {
                        let mut up = p.clone();
                        let mut dn = p.clone();
                        up[k] = up[k] + S::lit(h);
                        dn[k] = dn[k] - S::lit(h);
                        (region.sd(&up) - region.sd(&dn)).as_f64() / (2.0 * h)
                    })
                    .collect();
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let err = n
                    .iter()
                    .zip(&g)
                    .map(|(a, b)| (a.as_f64() - b / gn).abs())
                    .fold(0.0, f64::max);
                normals.see(1e-6 - err, || format!("normal error {err:.3e} on chart {i}"));
            }
        }
    }
    report.push(lip.check("signed_distance_lipschitz"));
    report.push(normals.check("normal_matches_gradient"));
    report
}

fn box_face_interior<S: Scalar>(region: &Region<S>, p: &[S]) -> bool {
    // keep box boundary points away from edges, where the distance is not smooth
    if let Region::Box { lo, hi } = region {
        let margin = S::lit(1e-3);
        let on_face = p
            .iter()
            .zip(lo.iter().zip(hi))
            .filter(|(x, (l, h))| (**x - **l).abs() < margin || (**x - **h).abs() < margin)
            .count();
        on_face == 1
    } else {
        true
    }
}

fn uniform<S: Scalar>(rng: &mut ChaCha8Rng, lo: S, hi: S) -> S {
    if hi > lo {
        S::lit(rng.random_range(lo.as_f64()..hi.as_f64()))
    } else {
        lo
    }
}

// ------------------------------------------------------------ operators

/// Operator name, values at `lo`, `hi` and `lo + c`, and the shift factor.
type OpSample = (&'static str, Option<f64>, Option<f64>, Option<f64>, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConfig<S> {
    pub trials: usize,
    pub seed: u64,
    pub grid: GridSpec<S>,
    pub dt: Option<S>,
}

/// Monotonicity, constant shift, locality of `M` and convexity of `H`.
pub fn run_operator_properties<S: Scalar>(
    model: &HybridModel<S>,
    config: &OperatorConfig<S>,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("operators", config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let disc = Discretization::build(model, &config.grid, config.dt)?;
    let plan = &disc.plan;
    let grid = &disc.grid;
    let n = grid.len();
    let gamma = plan.discount.as_f64();

    let mut mono = Worst::new();
    let mut shift = Worst::new();
    let mut local = Worst::new();
    let reach = grid.max_spacing() * S::lit((grid.max_dim().max(1) as f64).sqrt()) + model.boundary_tol;
    let outside_d: Vec<usize> = (0..n)
        .filter(|&i| {
            let s = grid.state(i);
            model.sd_destination(s.chart, &s.coords) > reach
        })
        .collect();
    for trial in 0..config.trials {
        let lo: Vec<S> = (0..n).map(|_| S::lit(rng.random_range(0.0..5.0))).collect();
        let hi: Vec<S> = lo.iter().map(|v| *v + S::lit(rng.random_range(0.0..1.0))).collect();
        let c = S::lit(rng.random_range(0.0..3.0));
        let shifted: Vec<S> = lo.iter().map(|v| *v + c).collect();
        let mut far = lo.clone();
        for &i in &outside_d {
            far[i] = far[i] + S::lit(rng.random_range(1.0..100.0));
        }
        for node in 0..n {
            let ops: [OpSample; 3] = [
                (
                    "continuation",
                    plan.continuation(node, &lo).map(|c| c.value.as_f64()),
                    plan.continuation(node, &hi).map(|c| c.value.as_f64()),
                    plan.continuation(node, &shifted).map(|c| c.value.as_f64()),
                    gamma,
                ),
                (
                    "M",
                    plan.m(node, &lo).map(|c| c.value.as_f64()),
                    plan.m(node, &hi).map(|c| c.value.as_f64()),
                    plan.m(node, &shifted).map(|c| c.value.as_f64()),
                    1.0,
                ),
                (
                    "N",
                    plan.n(node, &lo).map(|c| c.value.as_f64()),
                    plan.n(node, &hi).map(|c| c.value.as_f64()),
                    plan.n(node, &shifted).map(|c| c.value.as_f64()),
                    1.0,
                ),
            ];
            for (name, a, b, s, factor) in ops {
                let (Some(a), Some(b), Some(s)) = (a, b, s) else {
                    continue;
                };
                mono.see(b - a, || format!("{name} at node {node}, trial {trial}"));
                let err = (s - a - factor * c.as_f64()).abs();
                let tol = 1e-12 * (1.0 + a.abs() + c.as_f64());
                shift.see(tol - err, || {
                    format!("{name} at node {node}, trial {trial}: error {err:.3e}")
                });
            }
            if let (Some(a), Some(b)) = (plan.m(node, &lo), plan.m(node, &far)) {
                let d = (a.value - b.value).abs().as_f64();
                local.see(-d, || format!("M at node {node} moved by {d:.3e}"));
            }
        }
    }
    report.push(mono.check("operator_monotonicity"));
    report.push(shift.check("operator_constant_shift"));
    report.push(local.check("m_ignores_values_outside_d"));

    let mut convex = Worst::new();
    for x in sample_states(model, &mut rng, config.trials.max(1) * 4) {
        let d = x.coords.len();
        let p: Vec<S> = (0..d).map(|_| S::lit(rng.random_range(-5.0..5.0))).collect();
        let q: Vec<S> = (0..d).map(|_| S::lit(rng.random_range(-5.0..5.0))).collect();
        let mid: Vec<S> = p.iter().zip(&q).map(|(a, b)| (*a + *b) / S::lit(2.0)).collect();
        let t = S::lit(rng.random_range(0.0..1.0));
        let hs = |p: &[S]| hamiltonian_stationary(model, x.chart, &x.coords, p).map(|v| v.as_f64());
        let ht = |p: &[S]| hamiltonian_time(model, t, x.chart, &x.coords, p).map(|v| v.as_f64());
        let gap_s = 0.5 * (hs(&p)? + hs(&q)?) - hs(&mid)?;
        let gap_t = 0.5 * (ht(&p)? + ht(&q)?) - ht(&mid)?;
        let scale = 1e-12 * (1.0 + hs(&p)?.abs() + ht(&p)?.abs());
        convex.see(gap_s.min(gap_t) + scale, || fmt_state(&x));
    }
    report.push(convex.check("hamiltonian_convexity"));
    Ok(report)
}

// ------------------------------------------------------------------ ODE

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig<S> {
    pub trials: usize,
    pub seed: u64,
    pub horizon: S,
    pub step: S,
}

impl<S: Scalar> OdeConfig<S> {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            horizon: S::one(),
            step: S::lit(1e-3),
        }
    }
}

/// `|X_x(t) - X_z(t)| / (e^{Lt} |x - z|)` under a shared constant control.
pub fn flow_separation_ratio<S: Scalar>(
    model: &HybridModel<S>,
    chart: ChartId,
    x: &[S],
    z: &[S],
    u: &[S],
    t: S,
    step: S,
) -> S {
    let xt = flow(model, chart, x, u, S::zero(), t, step);
    let zt = flow(model, chart, z, u, S::zero(), t, step);
    distance(&xt, &zt) / ((model.constants.lipschitz * t).exp() * distance(x, z))
}

/// Flow estimates, jump separation, ledger additivity and the RK4 order.
pub fn run_ode_estimates<S: Scalar>(model: &HybridModel<S>, config: &OdeConfig<S>) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("ode", config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let f_hat = model.constants.dynamics_bound;
    let mut sep = Worst::new();
    let mut speed = Worst::new();
    for _ in 0..config.trials {
        let pair = sample_states(model, &mut rng, 1);
        let Some(x) = pair.first() else { continue };
        let d = x.coords.len();
        let dir = random_direction::<S, _>(&mut rng, d);
        let r = S::lit(rng.random_range(1e-3..0.5));
        let z: Vec<S> = x.coords.iter().zip(&dir).map(|(a, b)| *a + r * *b).collect();
        let u = &model.controls.u[rng.random_range(0..model.controls.u.len())];
        let t = S::lit(rng.random_range(0.05..1.0)) * config.horizon;
        let ratio = flow_separation_ratio(model, x.chart, &x.coords, &z, u, t, config.step).as_f64();
        sep.see(1.0 + 1e-6 - ratio, || format!("{} ratio {ratio:.9}", fmt_state(x)));

        let mut y = x.coords.clone();
        let mut s = S::zero();
        let steps = 20;
        let dt = t / S::lit(steps as f64);
        for _ in 0..steps {
            let next = flow(model, x.chart, &y, u, s, dt, config.step);
            if model.sd_domain(x.chart, &y) <= S::zero() && model.sd_domain(x.chart, &next) <= S::zero() {
                let moved = distance(&y, &next).as_f64();
                let bound = (f_hat * dt).as_f64() * (1.0 + 1e-9);
                speed.see(bound - moved, || {
                    format!("{} moved {moved:.6e} > {bound:.6e}", fmt_state(x))
                });
            }
            y = next;
            s = s + dt;
        }
    }
    report.push(sep.check("flow_separation_bound"));
    report.push(speed.check("flow_speed_bound"));

    let mut gaps = Worst::new();
    let mut ledger = Worst::new();
    for x0 in sample_states(model, &mut rng, config.trials.clamp(1, 10)) {
        let mut strategy = ExplicitStrategy::default();
        strategy.bind(model);
        let rec = match simulate(
            model,
            &x0,
            &mut strategy,
            Horizon::Stationary { tail_tol: S::lit(1e-6) },
            &SimConfig::default(),
        ) {
            Ok(rec) => rec,
            Err(e) => {
                gaps.see(f64::NEG_INFINITY, || format!("from {}: {e}", fmt_state(&x0)));
                ledger.see(f64::NEG_INFINITY, || format!("from {}: {e}", fmt_state(&x0)));
                continue;
            }
        };
        if let Some(g) = rec.min_event_gap() {
            let bound = (model.constants.beta / rec.f_hat).as_f64() - 1e-9;
            gaps.see(g.as_f64() - bound, || format!("from {}", fmt_state(&x0)));
        }
        let err = (rec.ledger_total() - rec.total_cost).abs().as_f64();
        ledger.see(1e-10 - err, || format!("from {}: {err:.3e}", fmt_state(&x0)));
    }
    report.push(gaps.check("jump_separation"));
    report.push(ledger.check("ledger_additivity"));

    let order = rk4_hit_order::<S>()?;
    report.push(PropertyCheck::new(
        "rk4_hit_time_order",
        order - 3.5,
        Some(format!("empirical order {order:.3}")),
    ));
    Ok(report)
}

/// Empirical order of hit-time error for `x' = x` from 1 into `{x ≥ e}`.
pub fn rk4_hit_order<S: Scalar>() -> Result<f64> {
    let doc = json!({
        "charts": [{
            "dim": 1,
            "domain": {"type": "box", "lo": [0.0], "hi": [10.0]},
            "A": {"type": "half_space", "normal": [-1.0], "offset": -std::f64::consts::E},
            "D": {"type": "ball", "center": [0.5], "radius": 0.25}
        }],
        "controls": {"u": [[0.0]]},
        "dynamics": ["x1"],
        "jump_map": {"target": 0, "coords": ["0.5"]},
        "costs": {"running": "0", "autonomous": "1"},
        "constants": {"lambda": 1.0, "F": 10.0, "L": 1.0, "beta": 1.0, "xi0": 0.25, "R": 1.0, "C_prime": 1.0}
    });
    let m: HybridModel<S> = HybridModel::from_value(doc)?;
    let err = |step: f64| -> Result<f64> {
        let opts = ArcOptions {
            step: S::lit(step),
            discount_rate: S::zero(),
        };
        let mut u = |_: S, _: &HybridState<S>| vec![S::zero()];
        let (_, hit) = integrate_arc(
            &m,
            &HybridState::new(0, vec![S::one()]),
            S::zero(),
            &mut u,
            S::lit(5.0),
            &opts,
        )?;
        Ok((hit.map_or(f64::NAN, |h| h.time.as_f64()) - 1.0).abs())
    };
    let (a, b) = (err(0.2)?, err(0.1)?);
    Ok((a / b).log2())
}

/// A smooth globally Lipschitz field `f_i = a_i sin(b_i x_j + c_i) + d_i x_k`
/// on `[-2, 2]^d` with declared `L` and `F` that are valid bounds.
pub fn random_lipschitz_model(seed: u64) -> Result<HybridModel<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=2usize);
    let mut exprs = Vec::new();
    let mut lip2 = 0.0;
    let mut bound2 = 0.0;
    for _ in 0..d {
        let a: f64 = rng.random_range(-1.5..1.5);
        let b: f64 = rng.random_range(-2.0..2.0);
        let c: f64 = rng.random_range(-3.0..3.0);
        let e: f64 = rng.random_range(-1.0..1.0);
        let j = rng.random_range(1..=d);
        let k = rng.random_range(1..=d);
        exprs.push(format!("{a} * sin({b} * x{j} + {c}) + {e} * x{k}"));
        lip2 += (a * b).abs() + e.abs();
        bound2 += (a.abs() + 2.0 * e.abs()).powi(2);
    }
    // sum of per-component constants bounds the Euclidean Lipschitz constant
    let lip: f64 = lip2;
    let doc = json!({
        "charts": [{"dim": d, "domain": {"type": "box", "lo": vec![-2.0; d], "hi": vec![2.0; d]}}],
        "controls": {"u": [[0.0]]},
        "dynamics": exprs,
        "costs": {"running": "1"},
        "constants": {
            "lambda": 1.0, "F": bound2.sqrt().max(1e-3), "L": lip.max(1e-3), "beta": 1.0,
            "xi0": 0.25, "R": 1.0, "C_prime": 1.0
        }
    });
    HybridModel::from_value(doc)
}

// --------------------------------------------------------------- solver

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverCheckConfig<S> {
    pub grid: GridSpec<S>,
    pub solver: SolverConfig<S>,
    pub seed: u64,
    pub starts: usize,
}

/// Residuals, contraction, monotone convergence and policy consistency of
/// a stationary solve.
pub fn run_solver_properties<S: Scalar>(
    model: &HybridModel<S>,
    config: &SolverCheckConfig<S>,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("stationary", config.seed);
    let disc = Discretization::build(model, &config.grid, config.solver.dt)?;
    let (v, policy, diag) = iterate(model, &disc, &config.solver)?;
    let tol = config.solver.tol.as_f64();
    report.push(PropertyCheck::flag(
        "converged",
        diag.converged,
        tol - diag.residual_history.last().copied().unwrap_or(f64::INFINITY),
        Some(format!("{} iterations", diag.iterations)),
    ));
    report.push(PropertyCheck::new(
        "qvi_residual_a",
        tol - diag.residual.autonomous,
        None,
    ));
    report.push(PropertyCheck::new(
        "qvi_residual_c",
        tol - diag.residual.controlled,
        None,
    ));
    report.push(PropertyCheck::new("qvi_residual_free", tol - diag.residual.free, None));
    let contraction = if model.has_jump_sets() {
        let noise = 8.0 * f64::EPSILON * diag.value_scale.max(1.0);
        diag.residual_history
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| 1.0 + noise / w[0] - w[1] / w[0])
            .fold(f64::INFINITY, f64::min)
    } else {
        -diag.contraction_excess(1e-9)
    };
    report.push(PropertyCheck::new(
        "contraction",
        if contraction.is_finite() { contraction } else { 0.0 },
        None,
    ));
    report.push(PropertyCheck::flag(
        "monotone_iterates",
        diag.monotone_iterates,
        diag.min_increment,
        None,
    ));
    let min_value = v.values.iter().map(|x| x.as_f64()).fold(f64::INFINITY, f64::min);
    report.push(PropertyCheck::new("nonnegative_values", min_value, None));
    let swept = disc.sweep(&v);
    let moved = sup_diff(&swept.values, &v.values).as_f64();
    report.push(PropertyCheck::new("fixed_point_invariance", tol - moved, None));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let slack = (5.0 * diag.h).max(5.0 * diag.dt);
    let mut consistency = Worst::new();
    for x0 in sample_states(model, &mut rng, config.starts) {
        let mut strategy = PolicyStrategy::stationary(&policy);
        let rec = simulate(
            model,
            &x0,
            &mut strategy,
            Horizon::Stationary { tail_tol: S::lit(1e-6) },
            &SimConfig::default(),
        )?;
        let value = v.interpolate(&x0).as_f64();
        let cost = rec.total_cost.as_f64();
        consistency.see(value + slack - cost, || {
            format!("{}: cost {cost:.6} vs V {value:.6}", fmt_state(&x0))
        });
        if let Some(g) = rec.min_event_gap() {
            let bound = (model.constants.beta / rec.f_hat).as_f64() - 1e-9;
            consistency.see(g.as_f64() - bound, || {
                format!("{}: jump gap {:.6}", fmt_state(&x0), g.as_f64())
            });
        }
    }
    report.push(consistency.check("policy_consistency"));
    Ok(report)
}

// --------------------------------------------------------------- finite

/// Terminal data, nonnegativity, horizon monotonicity, one-step
/// consistency, slice increments and terminal consistency.
pub fn run_finite_properties<S: Scalar>(
    model: &HybridModel<S>,
    grid: &GridSpec<S>,
    config: &FiniteConfig<S>,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("finite", 0);
    let (terminal, sol) = solve_finite(model, grid, config)?;
    report.push(PropertyCheck::new(
        "terminal_residual",
        1e-9 - terminal.residual.max(),
        Some(format!("{:?}", terminal.residual)),
    ));
    let mut sign = Worst::new();
    for (k, s) in sol.slices.iter().enumerate() {
        for (n, v) in s.values.iter().enumerate() {
            let m = if v.is_finite() { v.as_f64() } else { f64::NEG_INFINITY };
            sign.see(m, || format!("slice {k} node {n}"));
        }
    }
    report.push(sign.check("slices_nonnegative_finite"));
    if !model.is_time_dependent() {
        let mut mono = Worst::new();
        for (k, w) in sol.slices.windows(2).enumerate() {
            for (n, (a, b)) in w[0].values.iter().zip(&w[1].values).enumerate() {
                mono.see((*a - *b).as_f64() + 1e-12, || format!("slice {k} node {n}"));
            }
        }
        report.push(mono.check("monotone_in_horizon"));
    }
    let dpp_tol = 10.0 * config.march.sub_tol.as_f64() + 1e-9;
    let worst = sol.stats.iter().map(|s| s.residual).fold(0.0, f64::max);
    report.push(PropertyCheck::new("dpp_consistency", dpp_tol - worst, None));

    let g = &terminal.field.grid;
    let radius = grid.trunc_radius.unwrap_or_else(|| model.default_trunc_radius());
    let sup_k = (0..g.len())
        .map(|n| {
            let s = g.state(n);
            model
                .controls
                .u
                .iter()
                .map(|u| {
                    (0..=4)
                        .map(|j| {
                            let t = sol.time_grid.horizon * S::lit(j as f64 / 4.0);
                            model.running_cost(s.chart, t, &s.coords, u).as_f64()
                        })
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let f_hat = (model.constants.dynamics_bound * (S::one() + radius)).as_f64();
    let dt = sol.time_grid.dt.as_f64();
    let sqrt_d = (g.max_dim().max(1) as f64).sqrt();
    let mut incr = Worst::new();
    for (k, w) in sol.slices.windows(2).enumerate() {
        let slope = max_slope(g, &w[1].values) * sqrt_d;
        let bound = dt * (sup_k + f_hat * slope) + config.march.sub_tol.as_f64() + 1e-12;
        let change = sup_diff(&w[0].values, &w[1].values).as_f64();
        incr.see(bound - change, || {
            format!("slice {k}: change {change:.3e}, bound {bound:.3e}")
        });
    }
    report.push(incr.check("slice_increment_bound"));

    let tc = terminal_consistency_check(&sol, &terminal.field, radius, 5);
    let last = tc.last().map_or(0.0, |p| p.1);
    let nonincreasing = tc
        .windows(2)
        .map(|w| w[0].1 - w[1].1 + 1e-12)
        .fold(f64::INFINITY, f64::min);
    report.push(PropertyCheck::flag(
        "terminal_consistency",
        last == 0.0 && nonincreasing >= 0.0,
        nonincreasing.min(-last),
        Some(format!("{tc:?}")),
    ));
    Ok(report)
}

fn max_slope<S: Scalar>(grid: &Grid<S>, values: &[S]) -> f64 {
    let mut slope = 0.0f64;
    for cg in &grid.charts {
        for local in 0..cg.len() {
            let multi = cg.multi_index(local);
            for k in 0..cg.dim() {
                if multi[k] + 1 >= cg.counts[k] || cg.spacing[k] == S::zero() {
                    continue;
                }
                let mut up = multi.clone();
                up[k] += 1;
                let a = values[cg.offset() + local];
                let b = values[cg.offset() + cg.local_index(&up)];
                slope = slope.max(((a - b).abs() / cg.spacing[k]).as_f64());
            }
        }
    }
    slope
}

// ----------------------------------------------------- comparison shadow

/// Sweeps `sub` and `sup` side by side and reports the smallest nodewise
/// gap `sup - sub` seen over `sweeps` iterations (including the inputs).
pub fn shadow_order<S: Scalar>(disc: &Discretization<S>, sub: &[S], sup: &[S], sweeps: usize) -> (f64, usize) {
    let gap = |a: &[S], b: &[S]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (*y - *x).as_f64())
            .fold(f64::INFINITY, f64::min)
    };
    let mut lo = sub.to_vec();
    let mut hi = sup.to_vec();
    let mut worst = (gap(&lo, &hi), 0);
    for k in 1..=sweeps {
        lo = disc.sweep_values(&lo);
        hi = disc.sweep_values(&hi);
        let g = gap(&lo, &hi);
        if g < worst.0 {
            worst = (g, k);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowConfig<S> {
    pub grid: GridSpec<S>,
    pub solver: SolverConfig<S>,
    pub margin: S,
    pub sweeps: usize,
}

/// Discrete comparison: `V ∓ margin / (1 - e^{-λΔt})` keep their order
/// under repeated sweeps.
pub fn run_comparison_shadow<S: Scalar>(model: &HybridModel<S>, config: &ShadowConfig<S>) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("comparison", 0);
    let disc = Discretization::build(model, &config.grid, config.solver.dt)?;
    let (v, _, _) = iterate(model, &disc, &config.solver)?;
    let offset = config.margin / (S::one() - disc.plan.discount);
    let sub: Vec<S> = v.values.iter().map(|x| *x - offset).collect();
    let sup: Vec<S> = v.values.iter().map(|x| *x + offset).collect();
    let swept_sup = disc.sweep_values(&sup);
    let swept_sub = disc.sweep_values(&sub);
    let tol = config.solver.tol;
    let super_gap = sup
        .iter()
        .zip(&swept_sup)
        .map(|(a, b)| (*a - *b + tol).as_f64())
        .fold(f64::INFINITY, f64::min);
    let sub_gap = sub
        .iter()
        .zip(&swept_sub)
        .map(|(a, b)| (*b - *a + tol).as_f64())
        .fold(f64::INFINITY, f64::min);
    report.push(PropertyCheck::new("supersolution", super_gap, None));
    report.push(PropertyCheck::new("subsolution", sub_gap, None));
    let (gap, at) = shadow_order(&disc, &sub, &sup, config.sweeps);
    report.push(PropertyCheck::new(
        "order_preserved",
        gap,
        Some(format!("smallest gap after {at} sweeps")),
    ));
    Ok(report)
}

// ---------------------------------------------------------- convergence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    /// `(h, Δt)` per level.
    pub levels: Vec<(f64, f64)>,
    pub errors: Vec<f64>,
    pub empirical_order: f64,
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_order(levels: &[(f64, f64)], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(l, e)| (l.0.ln(), e.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `count` levels starting at `(h0, dt0)`, both halved each level.
pub fn refinement_levels(h0: f64, dt0: f64, count: usize) -> Vec<(f64, f64)> {
    (0..count)
        .map(|k| {
            let f = 0.5f64.powi(k as i32);
            (h0 * f, dt0 * f)
        })
        .collect()
}

/// Stationary solves on each level; the error is the sup over the coarsest
/// level's nodes of `|V_h - oracle|`.
pub fn run_convergence<S: Scalar>(
    model: &HybridModel<S>,
    oracle: &dyn Fn(&HybridState<S>) -> f64,
    levels: &[(f64, f64)],
    trunc_radius: Option<S>,
    solver: &SolverConfig<S>,
) -> Result<ConvergenceStudy> {
    let mut errors = Vec::with_capacity(levels.len());
    let mut points: Option<Arc<Grid<S>>> = None;
    for &(h, dt) in levels {
        let spec = GridSpec {
            h: S::lit(h),
            trunc_radius,
        };
        let cfg = SolverConfig {
            dt: Some(S::lit(dt)),
            validate: false,
            ..*solver
        };
        let (v, _, _) = solve_stationary(model, &spec, &cfg)?;
        let pts = points.get_or_insert_with(|| v.grid.clone()).clone();
        let err = (0..pts.len())
            .map(|n| {
                let s = pts.state(n);
                (v.interpolate(&s).as_f64() - oracle(&s)).abs()
            })
            .fold(0.0, f64::max);
        errors.push(err);
    }
    Ok(ConvergenceStudy {
        levels: levels.to_vec(),
        empirical_order: fitted_order(levels, &errors),
        errors,
    })
}

/// Finite-horizon study against an oracle `V(0, x)`, error measured over
/// coarsest-level nodes selected by `keep`.
pub fn run_convergence_finite<S: Scalar>(
    model: &HybridModel<S>,
    oracle: &dyn Fn(&HybridState<S>) -> f64,
    keep: &dyn Fn(&HybridState<S>) -> bool,
    levels: &[(f64, f64)],
    trunc_radius: Option<S>,
    horizon: S,
) -> Result<ConvergenceStudy> {
    let mut errors = Vec::with_capacity(levels.len());
    let mut points: Option<Arc<Grid<S>>> = None;
    for &(h, dt) in levels {
        let spec = GridSpec {
            h: S::lit(h),
            trunc_radius,
        };
        let mut cfg = FiniteConfig::new(horizon);
        cfg.validate = false;
        cfg.steps = Some((horizon.as_f64() / dt).round().max(1.0) as usize);
        let (_, sol) = solve_finite(model, &spec, &cfg)?;
        let v = &sol.slices[0];
        let pts = points.get_or_insert_with(|| v.grid.clone()).clone();
        let err = (0..pts.len())
            .map(|n| pts.state(n))
            .filter(|s| keep(s))
            .map(|s| (v.interpolate(&s).as_f64() - oracle(&s)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    Ok(ConvergenceStudy {
        levels: levels.to_vec(),
        empirical_order: fitted_order(levels, &errors),
        errors,
    })
}

/// Stationary field solved on a finer grid, used as a reference oracle.
pub fn reference_solution<S: Scalar>(
    model: &HybridModel<S>,
    h: f64,
    dt: f64,
    trunc_radius: Option<S>,
    solver: &SolverConfig<S>,
) -> Result<ValueField<S>> {
    let spec = GridSpec {
        h: S::lit(h),
        trunc_radius,
    };
    let cfg = SolverConfig {
        dt: Some(S::lit(dt)),
        validate: false,
        ..*solver
    };
    Ok(solve_stationary(model, &spec, &cfg)?.0)
}

/// Destination nodes of a grid, exposed for suites that need them.
pub fn destination_count<S: Scalar>(model: &HybridModel<S>, grid: &Grid<S>) -> usize {
    destination_nodes(model, grid).len()
}

/// Number of nodes of each tag.
pub fn tag_counts(tags: &[NodeTag]) -> (usize, usize, usize) {
    let count = |t| tags.iter().filter(|&&x| x == t).count();
    (
        count(NodeTag::Autonomous),
        count(NodeTag::Controlled),
        count(NodeTag::Free),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn solver_cfg(h: f64) -> SolverCheckConfig<f64> {
        SolverCheckConfig {
            grid: GridSpec::new(h),
            solver: SolverConfig::default(),
            seed: 7,
            starts: 10,
        }
    }

    #[test]
    fn audit_on_fixtures() {
        for m in [
            fixtures::conveyor::<f64>(),
            fixtures::attractor(),
            fixtures::two_chart(),
        ] {
            let r = run_assumption_audit(&m, 32, 3);
            assert!(r.all_passed(), "{}", r.table());
        }
        let mut doc = fixtures::conveyor_json();
        doc["dynamics"] = json!(["-1"]);
        let bad: HybridModel<f64> = HybridModel::from_value(doc).unwrap();
        let r = run_assumption_audit(&bad, 32, 3);
        assert!(!r.check("transversality_a").unwrap().passed);
    }

    #[test]
    fn operator_suite_passes_and_is_deterministic() {
        for m in [
            fixtures::conveyor::<f64>(),
            fixtures::attractor(),
            fixtures::two_chart(),
        ] {
            let cfg = OperatorConfig {
                trials: 5,
                seed: 1,
                grid: GridSpec::new(0.1),
                dt: None,
            };
            let a = run_operator_properties(&m, &cfg).unwrap();
            assert!(a.all_passed(), "{}", a.table());
            assert_eq!(a, run_operator_properties(&m, &cfg).unwrap());
        }
    }

    #[test]
    fn ode_suite() {
        for m in [
            fixtures::conveyor::<f64>(),
            fixtures::attractor(),
            fixtures::two_chart(),
        ] {
            let r = run_ode_estimates(&m, &OdeConfig::new(20, 2)).unwrap();
            assert!(r.all_passed(), "{}", r.table());
        }
        let m = fixtures::constant_cost::<f64>();
        let r = flow_separation_ratio(&m, ChartId(0), &[0.1], &[0.4], &[0.0], 1.0, 1e-3);
        assert!((r - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn random_fields_have_margin() {
        for seed in 0..10 {
            let m = random_lipschitz_model(seed).unwrap();
            let r = run_ode_estimates(&m, &OdeConfig::new(10, seed)).unwrap();
            let c = r.check("flow_separation_bound").unwrap();
            assert!(c.margin > 1e-6, "seed {seed}: {c:?}");
            assert!(r.check("flow_speed_bound").unwrap().passed);
        }
    }

    #[test]
    fn solver_suite_on_fixtures() {
        for m in [
            fixtures::conveyor::<f64>(),
            fixtures::attractor(),
            fixtures::two_chart(),
        ] {
            let r = run_solver_properties(&m, &solver_cfg(0.05)).unwrap();
            assert!(r.all_passed(), "{}", r.table());
        }
    }

    #[test]
    fn finite_suite() {
        let m = fixtures::constant_cost::<f64>();
        let mut cfg = FiniteConfig::new(2.0);
        cfg.steps = Some(100);
        let r = run_finite_properties(&m, &GridSpec::new(0.1), &cfg).unwrap();
        assert!(r.all_passed(), "{}", r.table());
        let m = fixtures::conveyor::<f64>();
        let r = run_finite_properties(&m, &GridSpec::new(0.1), &FiniteConfig::new(1.0)).unwrap();
        assert!(r.all_passed(), "{}", r.table());
    }

    #[test]
    fn shadow_and_negative_control() {
        let m = fixtures::conveyor::<f64>();
        for margin in [0.0, 0.1] {
            let cfg = ShadowConfig {
                grid: GridSpec::new(0.1),
                solver: SolverConfig::default(),
                margin,
                sweeps: 100,
            };
            let r = run_comparison_shadow(&m, &cfg).unwrap();
            assert!(r.all_passed(), "{}", r.table());
        }
        let disc = Discretization::build(&m, &GridSpec::new(0.1), None).unwrap();
        let sub = vec![1.0; disc.grid.len()];
        let sup = vec![0.5; disc.grid.len()];
        assert!(shadow_order(&disc, &sub, &sup, 5).0 < 0.0);
    }

    #[test]
    fn conveyor_convergence_order() {
        let m = fixtures::conveyor::<f64>();
        let levels = refinement_levels(0.1, 0.05, 4);
        let oracle = |s: &HybridState<f64>| fixtures::conveyor_value(s.coords[0]);
        let study = run_convergence(&m, &oracle, &levels, None, &SolverConfig::default()).unwrap();
        assert!(study.empirical_order >= 0.8, "{study:?}");
        assert!(study.errors.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn order_fit() {
        let levels = refinement_levels(0.1, 0.1, 4);
        let errors: Vec<f64> = levels.iter().map(|l| 3.0 * l.0 * l.0).collect();
        assert!((fitted_order(&levels, &errors) - 2.0).abs() < 1e-12);
    }
}
