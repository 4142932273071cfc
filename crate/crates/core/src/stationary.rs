//! Value iteration for the discounted infinite-horizon problem.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{classify_nodes, destination_nodes, Grid, GridSpec, NodeTag, TimeStamp, ValueField};
use crate::model::HybridModel;
use crate::operators::{NodeUpdate, SweepPlan};
use crate::policy::Policy;
use crate::scalar::{sup_diff, Scalar};
use crate::validate::validate_model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SolverConfig<S> {
    /// Time step; defaults to `h / (2F)`.
    pub dt: Option<S>,
    pub tol: S,
    pub max_iter: usize,
    /// Refuse models that fail the assumption audit.
    pub validate: bool,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        Self {
            dt: None,
            tol: S::lit(1e-6),
            max_iter: 100_000,
            validate: true,
        }
    }
}

/// Largest QVI residual per node class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QviResidual {
    pub autonomous: f64,
    pub controlled: f64,
    pub free: f64,
}

impl QviResidual {
    pub fn max(&self) -> f64 {
        self.autonomous.max(self.controlled).max(self.free)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub h: f64,
    pub dt: f64,
    pub tol: f64,
    pub stop_threshold: f64,
    /// `e^{-λΔt}`.
    pub discount: f64,
    /// Sup of `|V|` over the final iterate.
    pub value_scale: f64,
    pub residual_history: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    /// Every sweep left each node value at least as large as before.
    pub monotone_iterates: bool,
    pub min_increment: f64,
    pub residual: QviResidual,
    pub max_clamp_distance: f64,
    pub clamp_error_bound: f64,
    pub nodes: usize,
    pub autonomous_nodes: usize,
    pub controlled_nodes: usize,
    pub destination_nodes: usize,
}

impl SolveDiagnostics {
    /// Whether every ratio of successive diffs is at most
    /// `discount (1 + rel)`, up to the rounding of the stored iterates.
    pub fn contraction_holds(&self, rel: f64) -> bool {
        self.contraction_excess(rel) <= 0.0
    }

    /// Largest amount by which a ratio exceeds its bound (negative if none).
    pub fn contraction_excess(&self, rel: f64) -> f64 {
        let noise = 8.0 * f64::EPSILON * self.value_scale.max(1.0);
        self.residual_history
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0] - self.discount * (1.0 + rel) - noise / w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Default time step `h / (2F)`.
pub fn default_dt<S: Scalar>(model: &HybridModel<S>, grid: &Grid<S>) -> S {
    let h = grid.max_spacing();
    let h = if h > S::zero() { h } else { S::one() };
    h / (S::lit(2.0) * model.constants.dynamics_bound)
}

/// Grid, tags and plan for the stationary scheme.
#[derive(Debug, Clone)]
pub struct Discretization<S> {
    pub grid: Arc<Grid<S>>,
    pub plan: SweepPlan<S>,
}

impl<S: Scalar> Discretization<S> {
    pub fn new(model: &HybridModel<S>, grid: Arc<Grid<S>>, dt: S) -> Result<Self> {
        let tags = classify_nodes(model, &grid);
        let dests = destination_nodes(model, &grid);
        let plan = SweepPlan::stationary(model, &grid, tags, dests, dt)?;
        Ok(Self { grid, plan })
    }

    pub fn build(model: &HybridModel<S>, spec: &GridSpec<S>, dt: Option<S>) -> Result<Self> {
        let grid = Arc::new(Grid::build(model, spec)?);
        let dt = dt.unwrap_or_else(|| default_dt(model, &grid));
        Self::new(model, grid, dt)
    }

    pub fn sweep_values(&self, values: &[S]) -> Vec<S> {
        (0..values.len())
            .into_par_iter()
            .map(|n| self.plan.update(n, values, values).value)
            .collect()
    }

    pub fn sweep_updates(&self, values: &[S]) -> Vec<NodeUpdate<S>> {
        (0..values.len())
            .into_par_iter()
            .map(|n| self.plan.update(n, values, values))
            .collect()
    }

    pub fn sweep(&self, field: &ValueField<S>) -> ValueField<S> {
        field.with_values(self.sweep_values(&field.values))
    }

    pub fn residual(&self, values: &[S]) -> QviResidual {
        let next = self.sweep_values(values);
        let mut r = QviResidual::default();
        for (n, (a, b)) in values.iter().zip(&next).enumerate() {
            let d = (*a - *b).abs().as_f64();
            let slot = match self.plan.tags[n] {
                NodeTag::Autonomous => &mut r.autonomous,
                NodeTag::Controlled => &mut r.controlled,
                NodeTag::Free => &mut r.free,
            };
            if d > *slot || d.is_nan() {
                *slot = d;
            }
        }
        r
    }
}

/// One Jacobi sweep: `MV` on `A`, `min(NV, continuation)` on `C`,
/// continuation elsewhere.
pub fn bellman_sweep<S: Scalar>(model: &HybridModel<S>, field: &ValueField<S>, dt: S) -> Result<ValueField<S>> {
    Ok(Discretization::new(model, field.grid.clone(), dt)?.sweep(field))
}

/// Per-class sup of `|V - TV|`.
pub fn qvi_residual<S: Scalar>(model: &HybridModel<S>, field: &ValueField<S>, dt: S) -> Result<QviResidual> {
    Ok(Discretization::new(model, field.grid.clone(), dt)?.residual(&field.values))
}

/// Largest one-cell slope on the outer layer of every chart grid.
fn edge_slope<S: Scalar>(grid: &Grid<S>, values: &[S]) -> S {
    let mut slope = S::zero();
    for cg in &grid.charts {
        for local in 0..cg.len() {
            let multi = cg.multi_index(local);
            let on_edge = multi.iter().zip(&cg.counts).any(|(&i, &n)| i == 0 || i + 1 == n);
            if !on_edge {
                continue;
            }
            for k in 0..cg.dim() {
                if cg.counts[k] < 2 || cg.spacing[k] == S::zero() {
                    continue;
                }
                let mut other = multi.clone();
                other[k] = if multi[k] == 0 { 1 } else { multi[k] - 1 };
                let a = values[cg.offset() + local];
                let b = values[cg.offset() + cg.local_index(&other)];
                slope = slope.max((a - b).abs() / cg.spacing[k]);
            }
        }
    }
    slope
}

/// Iterates the scheme from `V ≡ 0` until successive iterates differ by at
/// most `tol (1 - e^{-λΔt})`.
pub fn solve_stationary<S: Scalar>(
    model: &HybridModel<S>,
    spec: &GridSpec<S>,
    config: &SolverConfig<S>,
) -> Result<(ValueField<S>, Policy<S>, SolveDiagnostics)> {
    if config.validate {
        let report = validate_model(model, 64);
        if !report.all_passed() {
            let names: Vec<&str> = report.failures().map(|e| e.name.as_str()).collect();
            return Err(Error::ValidationFailed(names.join(", ")));
        }
    }
    let disc = Discretization::build(model, spec, config.dt)?;
    let (field, policy, diag) = iterate(model, &disc, config)?;
    if !diag.converged {
        return Err(Error::NoConvergence {
            iterations: diag.iterations,
            residual: diag.residual_history.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok((field, policy, diag))
}

/// Runs value iteration on a prepared discretization; reports rather than
/// fails on non-convergence.
pub fn iterate<S: Scalar>(
    model: &HybridModel<S>,
    disc: &Discretization<S>,
    config: &SolverConfig<S>,
) -> Result<(ValueField<S>, Policy<S>, SolveDiagnostics)> {
    let plan = &disc.plan;
    let discount = plan.discount;
    let threshold = config.tol * (S::one() - discount);
    let mut values = vec![S::zero(); disc.grid.len()];
    let mut history = Vec::new();
    let mut ratios = Vec::new();
    let mut monotone = true;
    let mut min_increment = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let next = disc.sweep_values(&values);
        iterations += 1;
        let diff = sup_diff(&next, &values);
        let inc = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (*a - *b).as_f64())
            .fold(f64::INFINITY, f64::min);
        min_increment = min_increment.min(inc);
        monotone &= inc >= 0.0;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence {
                iterations,
                residual: f64::INFINITY,
            });
        }
        if let Some(&prev) = history.last() {
            if prev > 0.0 {
                ratios.push(diff.as_f64() / prev);
            }
        }
        history.push(diff.as_f64());
        values = next;
        if diff <= threshold {
            converged = true;
            break;
        }
    }
    let updates = disc.sweep_updates(&values);
    let residual = disc.residual(&values);
    let field = ValueField {
        grid: disc.grid.clone(),
        values,
        stamp: TimeStamp::Stationary,
    };
    let policy = Policy::from_updates(
        disc.grid.clone(),
        plan.tags.clone(),
        &updates,
        model.controls.u.clone(),
        TimeStamp::Stationary,
    );
    let clamp = plan.max_clamp();
    let clamp_bound = if clamp > S::zero() {
        discount * clamp * edge_slope(&disc.grid, &field.values) / (S::one() - discount)
    } else {
        S::zero()
    };
    let count = |t: NodeTag| plan.tags.iter().filter(|&&x| x == t).count();
    let diag = SolveDiagnostics {
        iterations,
        converged,
        h: disc.grid.max_spacing().as_f64(),
        dt: plan.dt.as_f64(),
        tol: config.tol.as_f64(),
        stop_threshold: threshold.as_f64(),
        discount: discount.as_f64(),
        value_scale: field.values.iter().fold(0.0f64, |a, v| a.max(v.abs().as_f64())),
        residual_history: history,
        contraction_ratios: ratios,
        monotone_iterates: monotone,
        min_increment,
        residual,
        max_clamp_distance: clamp.as_f64(),
        clamp_error_bound: clamp_bound.as_f64(),
        nodes: disc.grid.len(),
        autonomous_nodes: count(NodeTag::Autonomous),
        controlled_nodes: count(NodeTag::Controlled),
        destination_nodes: plan.destinations.len(),
    };
    Ok((field, policy, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::HybridState;
    use crate::operators::Action;
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    fn exact() -> SolverConfig<f64> {
        SolverConfig {
            tol: 1e-10,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn sweep_of_zero_is_dt_without_jumps() {
        let m = fixtures::constant_cost::<f64>();
        let g = Arc::new(Grid::build(&m, &GridSpec::new(0.1)).unwrap());
        let v = bellman_sweep(&m, &ValueField::zeros(g), 0.05).unwrap();
        assert!(v.values.iter().all(|&x| (x - 0.05).abs() < 1e-15));
        let r = qvi_residual(&m, &ValueField::zeros(v.grid.clone()), 0.05).unwrap();
        assert_abs_diff_eq!(r.free, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn constant_cost_fixed_point() {
        let m = fixtures::constant_cost::<f64>();
        let dt = 0.05;
        let cfg = SolverConfig {
            dt: Some(dt),
            ..exact()
        };
        let (v, p, d) = solve_stationary(&m, &GridSpec::new(0.1), &cfg).unwrap();
        let oracle = dt / (1.0 - (-dt).exp());
        for x in &v.values {
            assert!((x - oracle).abs() <= 1e-9);
        }
        assert!(d.monotone_iterates);
        assert!(d.contraction_holds(1e-9), "excess {}", d.contraction_excess(1e-9));
        let early = &d.contraction_ratios[..20];
        assert!(early.iter().all(|r| *r <= (-dt).exp() * (1.0 + 1e-9)));
        assert!(p.actions.iter().all(|a| *a == Action::Continue));
    }

    #[test]
    fn conveyor_value_near_closed_form() {
        let m = fixtures::conveyor::<f64>();
        let h = 0.02;
        let (v, p, d) = solve_stationary(&m, &GridSpec::new(h), &SolverConfig::default()).unwrap();
        let got = v.interpolate(&HybridState::new(0, vec![0.5]));
        let err = (got - fixtures::conveyor_value_at_half()).abs();
        assert!(err <= 2.0 * h.max(d.dt), "error {err}");
        assert!(d.residual.max() <= 1e-6);
        assert!(d.monotone_iterates);
        assert!(v.values.iter().all(|&x| x >= 0.0));
        assert!(p
            .actions
            .iter()
            .zip(&p.tags)
            .all(|(a, t)| (*t == NodeTag::Autonomous) == matches!(a, Action::Autonomous(0))));
        let fixed = bellman_sweep(&m, &v, d.dt).unwrap();
        assert!(fixed.sup_diff(&v) <= 1e-6);
    }

    #[test]
    fn expensive_controlled_jumps_are_declined() {
        let mut doc = fixtures::attractor_json();
        doc["costs"]["controlled"] = json!("1e6");
        let m: HybridModel<f64> = HybridModel::from_value(doc).unwrap();
        let spec = GridSpec::new(0.05);
        let cfg = SolverConfig {
            validate: false,
            ..exact()
        };
        let (v, p, _) = solve_stationary(&m, &spec, &cfg).unwrap();
        assert_eq!(p.jump_count(), 0);

        let mut doc = fixtures::attractor_json();
        doc["charts"][0]["C"] = json!(null);
        doc["costs"]["controlled"] = json!(null);
        let free: HybridModel<f64> = HybridModel::from_value(doc).unwrap();
        let (w, _, _) = solve_stationary(&free, &spec, &cfg).unwrap();
        assert!(v.sup_diff(&w) <= 1e-9);
    }

    #[test]
    fn attractor_uses_controlled_jumps() {
        let m = fixtures::attractor::<f64>();
        let (v, p, d) = solve_stationary(&m, &GridSpec::new(0.05), &SolverConfig::default()).unwrap();
        assert!(p.jump_count() > 0);
        assert!(d.residual.max() <= 1e-6);
        assert!(d.monotone_iterates);
        for r in &d.contraction_ratios {
            assert!(*r <= 1.0 + 1e-9);
        }
        assert!(v.is_finite());
    }

    #[test]
    fn refuses_invalid_models() {
        let mut doc = fixtures::conveyor_json();
        doc["dynamics"] = json!(["-1"]);
        let m: HybridModel<f64> = HybridModel::from_value(doc).unwrap();
        let r = solve_stationary(&m, &GridSpec::new(0.1), &SolverConfig::default());
        assert!(matches!(r, Err(Error::ValidationFailed(_))));
    }

    #[test]
    fn policy_csv_round_trip() {
        let m = fixtures::attractor::<f64>();
        let (_, p, _) = solve_stationary(&m, &GridSpec::new(0.1), &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = Policy::read_csv(p.grid.clone(), p.u_samples.clone(), p.stamp, buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn non_convergence_is_reported() {
        let m = fixtures::conveyor::<f64>();
        let cfg = SolverConfig {
            max_iter: 3,
            ..SolverConfig::default()
        };
        let r = solve_stationary(&m, &GridSpec::new(0.1), &cfg);
        assert!(matches!(r, Err(Error::NoConvergence { iterations: 3, .. })));
    }
}
