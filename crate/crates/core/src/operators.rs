//! Nonlocal jump operators, Hamiltonians and the semi-Lagrangian update.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{node_tolerance, Grid, NodeTag, Stencil, ValueField};
use crate::model::{ChartId, HybridModel, HybridState};
use crate::scalar::{dot, norm, Scalar};

/// A minimizing candidate: its value and index (control sample, `v` sample
/// or destination node, depending on the operator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice<S> {
    pub value: S,
    pub index: usize,
}

/// Minimum over `(index, value)` pairs; the first of equal values wins and
/// NaN never wins.
pub fn argmin<S: Scalar>(candidates: impl IntoIterator<Item = (usize, S)>) -> Option<Choice<S>> {
    let mut best: Option<Choice<S>> = None;
    for (index, value) in candidates {
        match best {
            None => best = Some(Choice { value, index }),
            Some(b) if value < b.value || (b.value.is_nan() && !value.is_nan()) => best = Some(Choice { value, index }),
            _ => {}
        }
    }
    best
}

fn require_in<S: Scalar>(distance: S, tol: S) -> Result<()> {
    if distance <= tol {
        Ok(())
    } else {
        Err(Error::NotOnBoundary {
            distance: distance.as_f64(),
            tolerance: tol.as_f64(),
        })
    }
}

/// `MV(x) = min_v { V(g(x, v)) + C_a(x, v) }`.
pub fn m_op<S: Scalar>(model: &HybridModel<S>, field: &ValueField<S>, x: &HybridState<S>) -> Result<Choice<S>> {
    require_in(
        model.sd_autonomous(x.chart, &x.coords),
        node_tolerance(model, &x.coords),
    )?;
    let mut out = Vec::with_capacity(model.controls.v.len());
    for (i, v) in model.controls.v.iter().enumerate() {
        let target = model.jump_map(x.chart, &x.coords, v)?;
        let value = field.interpolate(&target) + model.autonomous_cost(x.chart, &x.coords, v);
        out.push((i, value));
    }
    argmin(out).ok_or(Error::EmptyCandidates("discrete control samples"))
}

/// `NV(x) = min_{x' ∈ D} { V(x') + C_c(x, x') }` over destination nodes of
/// the field's grid.
pub fn n_op<S: Scalar>(
    model: &HybridModel<S>,
    field: &ValueField<S>,
    x: &HybridState<S>,
    destinations: &[usize],
) -> Result<Choice<S>> {
    require_in(
        model.sd_controlled(x.chart, &x.coords),
        node_tolerance(model, &x.coords),
    )?;
    let mut sorted = destinations.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    argmin(sorted.into_iter().map(|d| {
        let dest = field.grid.state(d);
        (d, field.values[d] + model.controlled_cost(x.chart, &x.coords, &dest))
    }))
    .ok_or(Error::EmptyCandidates("destination nodes"))
}

fn check_dims<S: Scalar>(model: &HybridModel<S>, chart: ChartId, x: &[S], p: &[S]) -> Result<()> {
    let d = model.dim(chart);
    for got in [x.len(), p.len()] {
        if got != d {
            return Err(Error::DimensionMismatch { expected: d, got });
        }
    }
    Ok(())
}

/// `H(x, p) = max_u { (-K(x, u) - f(x, u)·p) / λ }`.
pub fn hamiltonian_stationary<S: Scalar>(model: &HybridModel<S>, chart: ChartId, x: &[S], p: &[S]) -> Result<S> {
    Ok(hamiltonian_time(model, S::zero(), chart, x, p)? / model.lambda())
}

/// `H(t, x, p) = max_u { -K(t, x, u) - f(t, x, u)·p }`.
pub fn hamiltonian_time<S: Scalar>(model: &HybridModel<S>, t: S, chart: ChartId, x: &[S], p: &[S]) -> Result<S> {
    check_dims(model, chart, x, p)?;
    let mut f = vec![S::zero(); x.len()];
    model
        .controls
        .u
        .iter()
        .map(|u| {
            model.dynamics_into(chart, t, x, u, &mut f);
            -model.running_cost(chart, t, x, u) - dot(&f, p)
        })
        .fold(None, |acc: Option<S>, h| Some(acc.map_or(h, |a| a.max(h))))
        .ok_or(Error::EmptyCandidates("control samples"))
}

fn foot<S: Scalar>(model: &HybridModel<S>, t: S, x: &HybridState<S>, u: &[S], dt: S) -> HybridState<S> {
    let f = model.dynamics(x.chart, t, &x.coords, u);
    HybridState {
        chart: x.chart,
        coords: x.coords.iter().zip(&f).map(|(&a, &b)| a + dt * b).collect(),
    }
}

/// `min_u { Δt K(x, u) + e^{-λΔt} V(x + Δt f(x, u)) }`.
pub fn continuation_update<S: Scalar>(
    model: &HybridModel<S>,
    field: &ValueField<S>,
    x: &HybridState<S>,
    dt: S,
) -> Choice<S> {
    let discount = (-model.lambda() * dt).exp();
    let t = S::zero();
    argmin(model.controls.u.iter().enumerate().map(|(i, u)| {
        let y = foot(model, t, x, u, dt);
        (
            i,
            dt * model.running_cost(x.chart, t, &x.coords, u) + discount * field.interpolate(&y),
        )
    }))
    .expect("control samples are nonempty")
}

/// `min_u { Δt K(t, x, u) + V_next(x + Δt f(t, x, u)) }`, with `next` the
/// slice at `t + Δt`.
pub fn continuation_update_time<S: Scalar>(
    model: &HybridModel<S>,
    next: &ValueField<S>,
    t: S,
    x: &HybridState<S>,
    dt: S,
) -> Choice<S> {
    argmin(model.controls.u.iter().enumerate().map(|(i, u)| {
        let y = foot(model, t, x, u, dt);
        (
            i,
            dt * model.running_cost(x.chart, t, &x.coords, u) + next.interpolate(&y),
        )
    }))
    .expect("control samples are nonempty")
}

/// Discrete action taken at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "snake_case")]
pub enum Action {
    /// Free node: follow the flow.
    Continue,
    /// Controlled node, jump declined.
    Decline,
    /// Controlled node, jump to the given destination node.
    Jump(usize),
    /// Autonomous node, jump with the given `v` sample.
    Autonomous(usize),
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Continue => "continue",
            Action::Decline => "decline",
            Action::Jump(_) => "jump",
            Action::Autonomous(_) => "autonomous",
        }
    }

    pub fn target(self) -> Option<usize> {
        match self {
            Action::Jump(i) | Action::Autonomous(i) => Some(i),
            _ => None,
        }
    }
}

/// Value and argmin structure at one node after an update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeUpdate<S> {
    pub value: S,
    pub control: Option<usize>,
    pub action: Action,
}

#[derive(Debug, Clone)]
struct Candidate<S> {
    cost: S,
    stencil: Stencil<S>,
}

/// Precomputed feet, jump targets and costs for every node of a grid, so
/// that repeated sweeps only interpolate.
#[derive(Debug, Clone)]
pub struct SweepPlan<S> {
    pub tags: Vec<NodeTag>,
    pub destinations: Vec<usize>,
    pub dt: S,
    /// Factor on the interpolated continuation value.
    pub discount: S,
    /// A controlled jump is taken only if it beats continuation by more than this.
    pub tie_tol: S,
    continuation: Vec<Vec<Candidate<S>>>,
    autonomous: Vec<Vec<Candidate<S>>>,
    controlled: Vec<Vec<(usize, S)>>,
    max_clamp: S,
}

impl<S: Scalar> SweepPlan<S> {
    /// Stationary plan: continuation discounted by `e^{-λΔt}`, data at `t = 0`.
    pub fn stationary(
        model: &HybridModel<S>,
        grid: &Grid<S>,
        tags: Vec<NodeTag>,
        destinations: Vec<usize>,
        dt: S,
    ) -> Result<Self> {
        let discount = (-model.lambda() * dt).exp();
        Self::build(model, grid, tags, destinations, dt, S::zero(), discount)
    }

    /// Time-slice plan: undiscounted, time-dependent data sampled at `t`.
    pub fn time_slice(
        model: &HybridModel<S>,
        grid: &Grid<S>,
        tags: Vec<NodeTag>,
        destinations: Vec<usize>,
        dt: S,
        t: S,
    ) -> Result<Self> {
        Self::build(model, grid, tags, destinations, dt, t, S::one())
    }

    fn build(
        model: &HybridModel<S>,
        grid: &Grid<S>,
        tags: Vec<NodeTag>,
        destinations: Vec<usize>,
        dt: S,
        t: S,
        discount: S,
    ) -> Result<Self> {
        if !(dt > S::zero()) {
            return Err(Error::InvalidGrid(format!("time step {dt} must be positive")));
        }
        if tags.contains(&NodeTag::Controlled) && destinations.is_empty() {
            return Err(Error::EmptyCandidates("destination nodes"));
        }
        let n = grid.len();
        let continuation: Vec<Vec<Candidate<S>>> = (0..n)
            .into_par_iter()
            .map(|node| {
                if tags[node] == NodeTag::Autonomous {
                    return Vec::new();
                }
                let x = grid.state(node);
                model
                    .controls
                    .u
                    .iter()
                    .map(|u| Candidate {
                        cost: dt * model.running_cost(x.chart, t, &x.coords, u),
                        stencil: grid.stencil(&foot(model, t, &x, u, dt)),
                    })
                    .collect()
            })
            .collect();
        let autonomous: Vec<Vec<Candidate<S>>> = (0..n)
            .into_par_iter()
            .map(|node| {
                if tags[node] != NodeTag::Autonomous {
                    return Ok(Vec::new());
                }
                let x = grid.state(node);
                model
                    .controls
                    .v
                    .iter()
                    .map(|v| {
                        let target = model.jump_map(x.chart, &x.coords, v)?;
                        Ok(Candidate {
                            cost: model.autonomous_cost(x.chart, &x.coords, v),
                            stencil: grid.stencil(&target),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let dest_states: Vec<HybridState<S>> = destinations.iter().map(|&d| grid.state(d)).collect();
        let controlled: Vec<Vec<(usize, S)>> = (0..n)
            .into_par_iter()
            .map(|node| {
                if tags[node] != NodeTag::Controlled {
                    return Vec::new();
                }
                let x = grid.state(node);
                destinations
                    .iter()
                    .zip(&dest_states)
                    .map(|(&d, ds)| (d, model.controlled_cost(x.chart, &x.coords, ds)))
                    .collect()
            })
            .collect();
        let max_clamp = continuation
            .iter()
            .chain(&autonomous)
            .flatten()
            .map(|c| c.stencil.clamp)
            .fold(S::zero(), S::max);
        let scale = continuation
            .iter()
            .flatten()
            .map(|c| c.cost.abs())
            .fold(S::one(), S::max);
        Ok(Self {
            tags,
            destinations,
            dt,
            discount,
            tie_tol: S::lit(64.0) * S::epsilon() * scale,
            continuation,
            autonomous,
            controlled,
            max_clamp,
        })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Largest distance by which a foot point or jump target was clamped.
    pub fn max_clamp(&self) -> S {
        self.max_clamp
    }

    /// Nodes whose continuation feet were clamped.
    pub fn clamped_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.continuation
            .iter()
            .enumerate()
            .filter(|(_, c)| c.iter().any(|c| c.stencil.clamp > S::zero()))
            .map(|(i, _)| i)
    }

    pub fn continuation(&self, node: usize, values: &[S]) -> Option<Choice<S>> {
        let discount = self.discount;
        argmin(
            self.continuation[node]
                .iter()
                .enumerate()
                .map(|(i, c)| (i, c.cost + discount * c.stencil.apply(values))),
        )
    }

    pub fn m(&self, node: usize, values: &[S]) -> Option<Choice<S>> {
        argmin(
            self.autonomous[node]
                .iter()
                .enumerate()
                .map(|(i, c)| (i, c.cost + c.stencil.apply(values))),
        )
    }

    pub fn n(&self, node: usize, values: &[S]) -> Option<Choice<S>> {
        argmin(self.controlled[node].iter().map(|&(d, c)| (d, values[d] + c)))
    }

    /// One QVI update at `node`: continuation reads `cont_values`, jump
    /// operators read `jump_values`.
    pub fn update(&self, node: usize, cont_values: &[S], jump_values: &[S]) -> NodeUpdate<S> {
        match self.tags[node] {
            NodeTag::Autonomous => {
                let m = self.m(node, jump_values).expect("v samples are nonempty");
                NodeUpdate {
                    value: m.value,
                    control: None,
                    action: Action::Autonomous(m.index),
                }
            }
            NodeTag::Controlled => {
                let c = self
                    .continuation(node, cont_values)
                    .expect("control samples are nonempty");
                let n = self.n(node, jump_values).expect("destinations are nonempty");
                if n.value < c.value - self.tie_tol {
                    NodeUpdate {
                        value: n.value,
                        control: Some(c.index),
                        action: Action::Jump(n.index),
                    }
                } else {
                    NodeUpdate {
                        value: c.value.min(n.value),
                        control: Some(c.index),
                        action: Action::Decline,
                    }
                }
            }
            NodeTag::Free => {
                let c = self
                    .continuation(node, cont_values)
                    .expect("control samples are nonempty");
                NodeUpdate {
                    value: c.value,
                    control: Some(c.index),
                    action: Action::Continue,
                }
            }
        }
    }
}

/// Conditioning transform `w = u e^{-ηξ(x)}` for fields of exponential growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GrowthTransform<S> {
    pub eta: S,
    pub radius: S,
}

impl<S: Scalar> GrowthTransform<S> {
    /// Requires `0 < η < λ / F`.
    pub fn new(model: &HybridModel<S>, eta: S) -> Result<Self> {
        let c = &model.constants;
        let bound = c.lambda / c.dynamics_bound;
        if !(eta > S::zero() && eta < bound) {
            return Err(Error::InvalidModel(format!(
                "growth rate {eta} must lie in (0, {bound})"
            )));
        }
        Ok(Self {
            eta,
            radius: c.destination_radius,
        })
    }

    /// `η = λ / (2F)`.
    pub fn for_model(model: &HybridModel<S>) -> Self {
        let c = &model.constants;
        Self {
            eta: c.lambda / (S::lit(2.0) * c.dynamics_bound),
            radius: c.destination_radius,
        }
    }

    /// Cutoff as a function of `r = |x|`: zero up to `R`, `√(1 + r²)` beyond
    /// `2R`, a quintic smoothstep blend in between.
    pub fn xi_radial(&self, r: S) -> S {
        let big = self.radius;
        if r <= big {
            return S::zero();
        }
        let full = (S::one() + r * r).sqrt();
        if r >= big + big {
            return full;
        }
        let s = (r - big) / big;
        let blend = s * s * s * (S::lit(10.0) + s * (S::lit(-15.0) + S::lit(6.0) * s));
        blend * full
    }

    pub fn xi(&self, x: &[S]) -> S {
        self.xi_radial(norm(x))
    }

    pub fn weight(&self, x: &[S]) -> S {
        (-self.eta * self.xi(x)).exp()
    }

    /// Largest `|Dξ|`, estimated on a fine radial mesh.
    pub fn gradient_bound(&self) -> S {
        let steps = 4000usize;
        let hi = S::lit(3.0) * self.radius;
        let dr = hi / S::from_usize_lossy(steps);
        (0..steps)
            .map(|i| {
                let r = dr * S::from_usize_lossy(i);
                ((self.xi_radial(r + dr) - self.xi_radial(r)) / dr).abs()
            })
            .fold(S::zero(), S::max)
    }

    pub fn to_bounded(&self, field: &ValueField<S>) -> ValueField<S> {
        self.scale(field, S::one())
    }

    pub fn from_bounded(&self, field: &ValueField<S>) -> ValueField<S> {
        self.scale(field, -S::one())
    }

    fn scale(&self, field: &ValueField<S>, sign: S) -> ValueField<S> {
        let g = &field.grid;
        field.with_values(
            (0..g.len())
                .map(|n| field.values[n] * (-sign * self.eta * self.xi(&g.coords(n))).exp())
                .collect(),
        )
    }

    /// Largest `|u(x)| e^{-η|x|}` over nodes with `|x| ≥ r`: small values
    /// indicate membership of the growth class far out.
    pub fn tail_weight(&self, field: &ValueField<S>, r: S) -> S {
        let g = &field.grid;
        (0..g.len())
            .filter_map(|n| {
                let x = g.coords(n);
                let nx = norm(&x);
                (nx >= r).then(|| field.values[n].abs() * (-self.eta * nx).exp())
            })
            .fold(S::zero(), S::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::{classify_nodes, destination_nodes, GridSpec, TimeStamp};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;
    use std::sync::Arc;

    fn field_on(model: &HybridModel<f64>, h: f64) -> ValueField<f64> {
        let g = Arc::new(Grid::build(model, &GridSpec::new(h)).unwrap());
        ValueField::zeros(g)
    }

    fn random_field(base: &ValueField<f64>, rng: &mut ChaCha8Rng) -> ValueField<f64> {
        base.with_values((0..base.values.len()).map(|_| rng.random_range(0.0..5.0)).collect())
    }

    fn multi_v_model() -> HybridModel<f64> {
        let mut doc = fixtures::conveyor_json();
        doc["controls"]["v"] = json!([[0.0], [1.0], [2.0], [3.0], [4.0]]);
        doc["jump_map"] = json!({"target": 0, "coords": ["0.3 + 0.1 * v1"]});
        doc["costs"]["autonomous"] = json!("1 + 0.05 * (v1 - 2)^2");
        doc["charts"][0]["D"] = json!({"type": "box", "lo": [0.25], "hi": [0.75]});
        HybridModel::from_value(doc).unwrap()
    }

    #[test]
    fn m_op_constant_costs() {
        let m = fixtures::conveyor::<f64>();
        let f = field_on(&m, 0.1);
        let c = m_op(&m, &f, &HybridState::new(0, vec![2.5])).unwrap();
        assert_eq!(c, Choice { value: 1.0, index: 0 });
        assert!(m_op(&m, &f, &HybridState::new(0, vec![1.0])).is_err());
    }

    #[test]
    fn m_op_matches_exhaustive_scan() {
        let m = multi_v_model();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(&field_on(&m, 0.05), &mut rng);
        let x = HybridState::new(0, vec![2.2]);
        let got = m_op(&m, &f, &x).unwrap();
        let mut best = (f64::INFINITY, 0);
        for (i, v) in m.controls.v.iter().enumerate() {
            let y = 0.3 + 0.1 * v[0];
            let val = f.interpolate(&HybridState::new(0, vec![y])) + 1.0 + 0.05 * (v[0] - 2.0).powi(2);
            if val < best.0 {
                best = (val, i);
            }
        }
        assert_abs_diff_eq!(got.value, best.0, epsilon = 1e-14);
        assert_eq!(got.index, best.1);
    }

    #[test]
    fn m_op_ignores_values_outside_destinations() {
        let m = fixtures::conveyor::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_field(&field_on(&m, 0.1), &mut rng);
        let mut b = a.clone();
        for n in 0..b.values.len() {
            if (n as f64 * 0.1 - 0.5).abs() > 0.11 {
                b.values[n] += 100.0;
            }
        }
        let x = HybridState::new(0, vec![2.0]);
        assert_eq!(m_op(&m, &a, &x).unwrap(), m_op(&m, &b, &x).unwrap());
    }

    #[test]
    fn n_op_single_and_exhaustive() {
        let m = fixtures::attractor::<f64>();
        let g = Arc::new(Grid::build(&m, &GridSpec::new(0.02)).unwrap());
        let dests = destination_nodes(&m, &g);
        assert!(dests.len() >= 20);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_field(&ValueField::zeros(g.clone()), &mut rng);
        let x = HybridState::new(0, vec![1.8]);
        let one = n_op(&m, &f, &x, &dests[..1]).unwrap();
        let y = g.coords(dests[0])[0];
        assert_abs_diff_eq!(
            one.value,
            f.values[dests[0]] + 0.2 + 0.1 * (1.8 - y).abs(),
            epsilon = 1e-14
        );

        let twenty = &dests[..20];
        let got = n_op(&m, &f, &x, twenty).unwrap();
        let brute = twenty
            .iter()
            .map(|&d| f.values[d] + 0.2 + 0.1 * (1.8 - g.coords(d)[0]).abs())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(got.value, brute);

        let zero = ValueField::zeros(g.clone());
        let flat = n_op(&m, &zero, &HybridState::new(0, vec![1.5]), &dests).unwrap();
        assert_eq!(flat.index, *dests.last().unwrap());
        assert!(matches!(n_op(&m, &f, &x, &[]), Err(Error::EmptyCandidates(_))));
    }

    #[test]
    fn n_op_ties_pick_lowest_node() {
        let mut doc = fixtures::attractor_json();
        doc["costs"]["controlled"] = json!("0.5");
        let m: HybridModel<f64> = HybridModel::from_value(doc).unwrap();
        let g = Arc::new(Grid::build(&m, &GridSpec::new(0.1)).unwrap());
        let dests = destination_nodes(&m, &g);
        let f = ValueField::zeros(g);
        let c = n_op(&m, &f, &HybridState::new(0, vec![2.0]), &dests).unwrap();
        assert_eq!(
            c,
            Choice {
                value: 0.5,
                index: dests[0]
            }
        );
    }

    #[test]
    fn hamiltonian_examples() {
        let m = fixtures::constant_cost::<f64>();
        assert_eq!(hamiltonian_stationary(&m, ChartId(0), &[0.3], &[7.0]).unwrap(), -1.0);
        assert_eq!(hamiltonian_time(&m, 0.5, ChartId(0), &[0.3], &[7.0]).unwrap(), -1.0);
        assert!(matches!(
            hamiltonian_stationary(&m, ChartId(0), &[0.3], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));

        let mut doc = fixtures::constant_cost_json();
        doc["controls"]["u"] = json!([[-1.0], [1.0]]);
        doc["dynamics"] = json!(["u1"]);
        doc["costs"]["running"] = json!("0");
        let m: HybridModel<f64> = HybridModel::from_value(doc).unwrap();
        for p in [-2.5, 0.0, 0.7] {
            assert_eq!(
                hamiltonian_stationary(&m, ChartId(0), &[0.0], &[p]).unwrap(),
                f64::abs(p)
            );
            assert_eq!(
                hamiltonian_time(&m, 1.0, ChartId(0), &[0.0], &[p]).unwrap(),
                f64::abs(p)
            );
        }
    }

    #[test]
    fn hamiltonian_matches_exhaustive_max() {
        let m = fixtures::attractor::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = rng.random_range(0.0..4.0);
            let p = rng.random_range(-5.0..5.0);
            let brute = [0.5, 1.0]
                .iter()
                .map(|&u| -(0.1 + x * x + 0.4 * (1.0 - u)) - u * (1.8 - x) * p)
                .fold(f64::NEG_INFINITY, f64::max);
            let h = hamiltonian_stationary(&m, ChartId(0), &[x], &[p]).unwrap();
            assert_abs_diff_eq!(h, brute / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn continuation_examples() {
        let m = fixtures::constant_cost::<f64>();
        let dt = 0.05;
        let zero = field_on(&m, 0.1);
        let x = HybridState::new(0, vec![0.2]);
        assert_abs_diff_eq!(continuation_update(&m, &zero, &x, dt).value, dt, epsilon = 1e-15);
        let fixed = dt / (1.0 - (-dt).exp());
        let fp = zero.shifted(fixed);
        assert_abs_diff_eq!(continuation_update(&m, &fp, &x, dt).value, fixed, epsilon = 1e-14);

        let c = fixtures::conveyor::<f64>();
        let five = field_on(&c, 0.1).shifted(5.0);
        let v = continuation_update(&c, &five, &HybridState::new(0, vec![1.0]), dt).value;
        assert_abs_diff_eq!(v, 5.0 * (-dt).exp(), epsilon = 1e-14);
        let v = continuation_update_time(&c, &five, 0.0, &HybridState::new(0, vec![1.0]), dt).value;
        assert_abs_diff_eq!(v, 5.0, epsilon = 1e-14);
    }

    #[test]
    fn plan_agrees_with_direct_operators() {
        for m in [
            fixtures::conveyor::<f64>(),
            fixtures::attractor(),
            fixtures::two_chart(),
        ] {
            let g = Arc::new(Grid::build(&m, &GridSpec::new(0.1)).unwrap());
            let tags = classify_nodes(&m, &g);
            let dests = destination_nodes(&m, &g);
            let dt = 0.02;
            let plan = SweepPlan::stationary(&m, &g, tags.clone(), dests.clone(), dt).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let f = random_field(&ValueField::zeros(g.clone()), &mut rng);
            for node in 0..g.len() {
                let x = g.state(node);
                match tags[node] {
                    NodeTag::Autonomous => {
                        let direct = m_op(&m, &f, &x).unwrap();
                        let planned = plan.m(node, &f.values).unwrap();
                        assert_abs_diff_eq!(direct.value, planned.value, epsilon = 1e-13);
                        assert_eq!(direct.index, planned.index);
                    }
                    tag => {
                        let direct = continuation_update(&m, &f, &x, dt);
                        let planned = plan.continuation(node, &f.values).unwrap();
                        assert_abs_diff_eq!(direct.value, planned.value, epsilon = 1e-13);
                        if tag == NodeTag::Controlled {
                            let direct = n_op(&m, &f, &x, &dests).unwrap();
                            assert_eq!(direct, plan.n(node, &f.values).unwrap());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn growth_transform_cutoff() {
        let m = fixtures::conveyor::<f64>();
        assert!(GrowthTransform::new(&m, 1.0).is_err());
        assert!(GrowthTransform::new(&m, 0.0).is_err());
        let tr = GrowthTransform::new(&m, 0.5).unwrap();
        assert_eq!(tr.xi(&[0.9]), 0.0);
        assert_eq!(tr.xi(&[-1.0]), 0.0);
        assert_abs_diff_eq!(tr.xi(&[2.5]), (1.0f64 + 6.25).sqrt(), epsilon = 1e-15);
        let mut last = 0.0;
        for i in 0..=300 {
            let v = tr.xi_radial(i as f64 * 0.01);
            assert!(v >= last);
            last = v;
        }
        assert_abs_diff_eq!(tr.xi_radial(2.0), 5f64.sqrt(), epsilon = 1e-12);
        let g = tr.gradient_bound();
        assert!(g > 1.0 && g < 5.0, "{g}");
    }

    #[test]
    fn growth_transform_is_identity_inside_radius_and_bounded_outside() {
        let m = fixtures::two_chart::<f64>();
        let tr = GrowthTransform::for_model(&m);
        let g = Arc::new(Grid::build(&m, &GridSpec::new(0.25).with_trunc_radius(3.0)).unwrap());
        let f = ValueField::from_fn(g.clone(), TimeStamp::Stationary, |s| {
            (tr.eta * crate::scalar::norm(&s.coords)).exp()
        });
        let w = tr.to_bounded(&f);
        for n in 0..g.len() {
            let x = g.coords(n);
            let r = crate::scalar::norm(&x);
            if r <= 1.0 {
                assert_eq!(w.values[n], f.values[n]);
            }
            if r >= 2.0 {
                assert!(w.values[n] <= (tr.eta * (r - tr.xi(&x))).exp() * (1.0 + 1e-12));
                assert!(w.values[n] <= 1.0);
            }
        }
        assert!(tr.tail_weight(&f, 0.0) <= 1.0 + 1e-12);
    }

    proptest! {
        #[test]
        fn growth_round_trip(seed in any::<u64>()) {
            let m = fixtures::two_chart::<f64>();
            let tr = GrowthTransform::for_model(&m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_field(&field_on(&m, 0.5), &mut rng);
            let back = tr.from_bounded(&tr.to_bounded(&f));
            for (a, b) in back.values.iter().zip(&f.values) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn operators_are_monotone_and_shift_exactly(seed in any::<u64>(), c in 0.0..3.0f64) {
            let m = fixtures::attractor::<f64>();
            let g = Arc::new(Grid::build(&m, &GridSpec::new(0.1)).unwrap());
            let dests = destination_nodes(&m, &g);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lo = random_field(&ValueField::zeros(g.clone()), &mut rng);
            let hi = lo.with_values(lo.values.iter().map(|v| v + rng.random_range(0.0..1.0)).collect());
            let dt = 0.03;
            let disc = (-3.0f64 * dt).exp();
            for node in 0..g.len() {
                let x = g.state(node);
                let a = continuation_update(&m, &lo, &x, dt).value;
                let b = continuation_update(&m, &hi, &x, dt).value;
                prop_assert!(a <= b);
                let s = continuation_update(&m, &lo.shifted(c), &x, dt).value;
                prop_assert!((s - a - disc * c).abs() < 1e-12);
                if m.in_controlled(&x) {
                    let a = n_op(&m, &lo, &x, &dests).unwrap().value;
                    prop_assert!(a <= n_op(&m, &hi, &x, &dests).unwrap().value);
                    let s = n_op(&m, &lo.shifted(c), &x, &dests).unwrap().value;
                    prop_assert!((s - a - c).abs() < 1e-12);
                }
            }
            let cm = fixtures::conveyor::<f64>();
            let cg = field_on(&cm, 0.1);
            let lo = random_field(&cg, &mut rng);
            let hi = lo.with_values(lo.values.iter().map(|v| v + rng.random_range(0.0..1.0)).collect());
            let x = HybridState::new(0, vec![2.3]);
            let a = m_op(&cm, &lo, &x).unwrap().value;
            prop_assert!(a <= m_op(&cm, &hi, &x).unwrap().value);
            prop_assert!((m_op(&cm, &lo.shifted(c), &x).unwrap().value - a - c).abs() < 1e-12);
        }

        #[test]
        fn hamiltonian_is_convex_in_p(x in 0.0..4.0f64, p in -10.0..10.0f64, q in -10.0..10.0f64) {
            let m = fixtures::attractor::<f64>();
            let h = |p: f64| hamiltonian_stationary(&m, ChartId(0), &[x], &[p]).unwrap();
            prop_assert!(h(0.5 * (p + q)) <= 0.5 * (h(p) + h(q)) + 1e-12);
        }
    }
}
