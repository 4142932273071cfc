//! Event-detecting trajectory simulation with a cost ledger.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::fmt17;
use crate::model::{ChartId, HybridModel, HybridState, RegionKind};
use crate::policy::Policy;
use crate::scalar::{norm, Scalar};

/// Hitting times are refined to this width.
pub const HIT_TIME_TOLERANCE: f64 = 1e-10;

/// One RK4 step of `x' = f(t, x, u)` with two cost integrals riding along:
/// the raw `∫K` and the weighted `∫e^{-ρt}K`.
fn rk4_step<S: Scalar>(
    model: &HybridModel<S>,
    chart: ChartId,
    t: S,
    x: &[S],
    u: &[S],
    h: S,
    rate: S,
) -> (Vec<S>, S, S) {
    let d = x.len();
    let half = h / S::lit(2.0);
    let eval = |t: S, y: &[S], out: &mut [S]| -> (S, S) {
        model.dynamics_into(chart, t, y, u, out);
        let k = model.running_cost(chart, t, y, u);
        (k, k * (-rate * t).exp())
    };
    let mut k1 = vec![S::zero(); d];
    let mut k2 = vec![S::zero(); d];
    let mut k3 = vec![S::zero(); d];
    let mut k4 = vec![S::zero(); d];
    let mut y = vec![S::zero(); d];
    let c1 = eval(t, x, &mut k1);
    for i in 0..d {
        y[i] = x[i] + half * k1[i];
    }
    let c2 = eval(t + half, &y, &mut k2);
    for i in 0..d {
        y[i] = x[i] + half * k2[i];
    }
    let c3 = eval(t + half, &y, &mut k3);
    for i in 0..d {
        y[i] = x[i] + h * k3[i];
    }
    let c4 = eval(t + h, &y, &mut k4);
    let six = S::lit(6.0);
    let two = S::lit(2.0);
    let next = (0..d)
        .map(|i| x[i] + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect();
    let raw = h / six * (c1.0 + two * c2.0 + two * c3.0 + c4.0);
    let weighted = h / six * (c1.1 + two * c2.1 + two * c3.1 + c4.1);
    (next, raw, weighted)
}

/// Integrates with a constant control for `duration`, no event handling.
pub fn flow<S: Scalar>(
    model: &HybridModel<S>,
    chart: ChartId,
    x0: &[S],
    u: &[S],
    t0: S,
    duration: S,
    step: S,
) -> Vec<S> {
    let steps = (duration / step).ceil().to_usize().unwrap_or(0).max(1);
    let h = duration / S::from_usize_lossy(steps);
    let mut x = x0.to_vec();
    let mut t = t0;
    for _ in 0..steps {
        x = rk4_step(model, chart, t, &x, u, h, S::zero()).0;
        t = t + h;
    }
    x
}

/// Default integration step `min(0.01, β / (10 F̂))`.
pub fn default_step<S: Scalar>(model: &HybridModel<S>, f_hat: S) -> S {
    S::lit(0.01).min(model.constants.beta / (S::lit(10.0) * f_hat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ArcSample<S> {
    pub t: S,
    pub coords: Vec<S>,
    /// `∫K` since the previous sample.
    pub running: S,
    /// Discounted `∫K` since the previous sample.
    pub discounted: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ArcRecord<S> {
    pub start: S,
    pub end: S,
    pub chart: ChartId,
    pub samples: Vec<ArcSample<S>>,
}

impl<S: Scalar> ArcRecord<S> {
    pub fn discounted_cost(&self) -> S {
        self.samples.iter().map(|s| s.discounted).sum()
    }

    pub fn end_state(&self) -> HybridState<S> {
        HybridState {
            chart: self.chart,
            coords: self.samples.last().expect("arcs are nonempty").coords.clone(),
        }
    }
}

/// First entry into a jump set along an arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit<S> {
    pub kind: RegionKind,
    pub state: HybridState<S>,
    pub time: S,
}

/// Options for [`integrate_arc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcOptions<S> {
    pub step: S,
    /// Discount rate applied to the weighted cost integral.
    pub discount_rate: S,
}

/// Runs RK4 from `x0` at `t0` until `t_max` or the first entry into `A` or
/// `C`, whichever comes first. The control is re-read at the start of every
/// step and held over it. A start inside `A` is an immediate hit.
pub fn integrate_arc<S: Scalar>(
    model: &HybridModel<S>,
    x0: &HybridState<S>,
    t0: S,
    control: &mut dyn FnMut(S, &HybridState<S>) -> Vec<S>,
    t_max: S,
    opts: &ArcOptions<S>,
) -> Result<(ArcRecord<S>, Option<Hit<S>>)> {
    let chart = x0.chart;
    let tol = model.boundary_tol;
    let mut arc = ArcRecord {
        start: t0,
        end: t0,
        chart,
        samples: vec![ArcSample {
            t: t0,
            coords: x0.coords.clone(),
            running: S::zero(),
            discounted: S::zero(),
        }],
    };
    if model.sd_autonomous(chart, &x0.coords) <= tol {
        return Ok((
            arc,
            Some(Hit {
                kind: RegionKind::Autonomous,
                state: x0.clone(),
                time: t0,
            }),
        ));
    }
    let mut t = t0;
    let mut x = x0.coords.clone();
    let mut sd_a = model.sd_autonomous(chart, &x);
    let mut sd_c = model.sd_controlled(chart, &x);
    let eps = S::lit(HIT_TIME_TOLERANCE);
    while t < t_max {
        let h = opts.step.min(t_max - t);
        if h <= S::zero() {
            break;
        }
        let state = HybridState {
            chart,
            coords: x.clone(),
        };
        let u = control(t, &state);
        let (next, raw, weighted) = rk4_step(model, chart, t, &x, &u, h, opts.discount_rate);
        let na = model.sd_autonomous(chart, &next);
        let nc = model.sd_controlled(chart, &next);
        let entering_a = sd_a > S::zero() && na <= S::zero();
        let entering_c = sd_c > S::zero() && nc <= S::zero();
        if entering_a || entering_c {
            // bisect on the sub-step length for each crossing and keep the earlier one
            let locate = |kind: RegionKind| -> S {
                let (mut lo, mut hi) = (S::zero(), h);
                while hi - lo > eps {
                    let mid = (lo + hi) / S::lit(2.0);
                    let (y, _, _) = rk4_step(model, chart, t, &x, &u, mid, opts.discount_rate);
                    if model.sd_region(kind, chart, &y) <= S::zero() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            };
            let ta = if entering_a {
                locate(RegionKind::Autonomous)
            } else {
                S::infinity()
            };
            let tc = if entering_c {
                locate(RegionKind::Controlled)
            } else {
                S::infinity()
            };
            let (kind, tau) = if ta <= tc {
                (RegionKind::Autonomous, ta)
            } else {
                (RegionKind::Controlled, tc)
            };
            let (y, raw, weighted) = rk4_step(model, chart, t, &x, &u, tau, opts.discount_rate);
            let time = t + tau;
            arc.samples.push(ArcSample {
                t: time,
                coords: y.clone(),
                running: raw,
                discounted: weighted,
            });
            arc.end = time;
            return Ok((
                arc,
                Some(Hit {
                    kind,
                    state: HybridState { chart, coords: y },
                    time,
                }),
            ));
        }
        let out = model.sd_domain(chart, &next);
        if out > tol {
            return Err(Error::ModelFault(format!(
                "trajectory left chart {} at t = {} (x = {:?}) without entering the autonomous set",
                chart.0,
                t + h,
                next.iter().map(|v| v.as_f64()).collect::<Vec<_>>()
            )));
        }
        t = t + h;
        x = next;
        sd_a = na;
        sd_c = nc;
        arc.samples.push(ArcSample {
            t,
            coords: x.clone(),
            running: raw,
            discounted: weighted,
        });
        arc.end = t;
    }
    Ok((arc, None))
}

/// `g(x, v)` with the landing checks: the target lies in `D` and at least
/// `β` from `A`.
pub fn apply_autonomous_jump<S: Scalar>(model: &HybridModel<S>, x: &HybridState<S>, v: &[S]) -> Result<HybridState<S>> {
    let tol = model.boundary_tol * S::lit(10.0);
    let d = model.sd_autonomous(x.chart, &x.coords);
    if d > tol {
        return Err(Error::NotOnBoundary {
            distance: d.as_f64(),
            tolerance: tol.as_f64(),
        });
    }
    let y = model.jump_map(x.chart, &x.coords, v)?;
    if model.sd_destination(y.chart, &y.coords) > tol {
        return Err(Error::ModelFault(format!(
            "jump from chart {} lands outside the destination set",
            x.chart.0
        )));
    }
    let gap = model.sd_autonomous(y.chart, &y.coords);
    if gap < model.constants.beta - tol {
        return Err(Error::ModelFault(format!(
            "jump lands {} from the autonomous set, closer than the separation {}",
            gap, model.constants.beta
        )));
    }
    Ok(y)
}

/// Decisions driving a simulation.
pub trait Strategy<S: Scalar> {
    /// Continuous control held over the step starting at `(t, x)`.
    fn control(&mut self, t: S, x: &HybridState<S>) -> Vec<S>;
    /// `v` sample index for a forced jump at `x`.
    fn autonomous(&mut self, t: S, x: &HybridState<S>) -> usize;
    /// Destination for a controlled jump at `x`, or `None` to decline.
    fn controlled(&mut self, t: S, x: &HybridState<S>) -> Option<HybridState<S>>;
    /// How far outside `D` a chosen destination may lie.
    fn destination_slack(&self) -> S {
        S::zero()
    }
}

/// Feedback from one stationary policy, or from a stack of time slices.
pub struct PolicyStrategy<'a, S> {
    slices: Vec<&'a Policy<S>>,
    start: S,
    dt: S,
}

impl<'a, S: Scalar> PolicyStrategy<'a, S> {
    pub fn stationary(policy: &'a Policy<S>) -> Self {
        Self {
            slices: vec![policy],
            start: S::zero(),
            dt: S::one(),
        }
    }

    /// `slices[n]` applies on `[start + nΔt, start + (n+1)Δt)`.
    pub fn time_sliced(slices: Vec<&'a Policy<S>>, start: S, dt: S) -> Self {
        assert!(!slices.is_empty());
        Self { slices, start, dt }
    }

    fn at(&self, t: S) -> &'a Policy<S> {
        if self.slices.len() == 1 {
            return self.slices[0];
        }
        let k = ((t - self.start) / self.dt).floor().max(S::zero());
        let k = k.to_usize().unwrap_or(0).min(self.slices.len() - 1);
        self.slices[k]
    }
}

impl<S: Scalar> Strategy<S> for PolicyStrategy<'_, S> {
    fn control(&mut self, t: S, x: &HybridState<S>) -> Vec<S> {
        self.at(t).control_at(x).to_vec()
    }

    fn autonomous(&mut self, t: S, x: &HybridState<S>) -> usize {
        self.at(t).autonomous_at(x)
    }

    fn controlled(&mut self, t: S, x: &HybridState<S>) -> Option<HybridState<S>> {
        let p = self.at(t);
        p.controlled_at(x).map(|d| p.grid.state(d))
    }

    fn destination_slack(&self) -> S {
        self.slices[0].grid.max_spacing() / S::lit(2.0) * S::lit(1.0 + 1e-9)
    }
}

/// Open-loop controls: a piecewise-constant `u` schedule, the `v` choices
/// for successive autonomous jumps and the answers at successive
/// controlled-jump decision points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ExplicitStrategy<S> {
    /// `(start time, u)` pairs in increasing time; before the first entry
    /// the first control sample of the model is used.
    #[serde(default)]
    pub schedule: Vec<(S, Vec<S>)>,
    /// `v` sample index per autonomous jump; the last one repeats, `0` if empty.
    #[serde(default)]
    pub v: Vec<usize>,
    /// Destination per controlled decision point; missing entries decline.
    #[serde(default)]
    pub jumps: Vec<Option<HybridState<S>>>,
    #[serde(skip)]
    fallback: Vec<S>,
    #[serde(skip)]
    autonomous_seen: usize,
    #[serde(skip)]
    controlled_seen: usize,
}

impl<S: Scalar> ExplicitStrategy<S> {
    pub fn new(schedule: Vec<(S, Vec<S>)>, v: Vec<usize>, jumps: Vec<Option<HybridState<S>>>) -> Self {
        Self {
            schedule,
            v,
            jumps,
            ..Self::default()
        }
    }

    /// Prepares the strategy for a model (default control, counters).
    pub fn bind(&mut self, model: &HybridModel<S>) {
        self.fallback = model.controls.u[0].clone();
        self.autonomous_seen = 0;
        self.controlled_seen = 0;
    }
}

impl<S: Scalar> Strategy<S> for ExplicitStrategy<S> {
    fn control(&mut self, t: S, _x: &HybridState<S>) -> Vec<S> {
        self.schedule
            .iter()
            .rev()
            .find(|(s, _)| *s <= t)
            .map(|(_, u)| u.clone())
            .unwrap_or_else(|| self.fallback.clone())
    }

    fn autonomous(&mut self, _t: S, _x: &HybridState<S>) -> usize {
        let i = self.autonomous_seen;
        self.autonomous_seen += 1;
        self.v.get(i).or(self.v.last()).copied().unwrap_or(0)
    }

    fn controlled(&mut self, _t: S, _x: &HybridState<S>) -> Option<HybridState<S>> {
        let i = self.controlled_seen;
        self.controlled_seen += 1;
        self.jumps.get(i).cloned().flatten()
    }
}

/// Simulation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[serde(bound = "S: Scalar")]
pub enum Horizon<S> {
    /// Discounted infinite horizon, truncated once the tail bound drops below `tail_tol`.
    Stationary { tail_tol: S },
    /// Undiscounted `[start, end]` with terminal cost at `end`.
    Finite { start: S, end: S },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig<S> {
    /// Integration step; defaults to `min(0.01, β / (10 F̂))`.
    pub step: Option<S>,
    pub max_jumps: usize,
}

impl<S: Scalar> Default for SimConfig<S> {
    fn default() -> Self {
        Self {
            step: None,
            max_jumps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct JumpEvent<S> {
    pub time: S,
    pub kind: RegionKind,
    pub pre: HybridState<S>,
    pub post: HybridState<S>,
    /// `v` sample index for autonomous jumps, destination chart for controlled ones.
    pub choice: usize,
    pub cost: S,
    pub discounted_cost: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TrajectoryRecord<S> {
    pub horizon: Horizon<S>,
    pub arcs: Vec<ArcRecord<S>>,
    pub events: Vec<JumpEvent<S>>,
    /// Discounted running cost over all arcs.
    pub running_cost_integral: S,
    pub terminal_cost: S,
    pub total_cost: S,
    /// Tail bound at the truncation time (stationary mode).
    pub truncation_bound: Option<S>,
    /// Dynamics bound used for the jump-separation check.
    pub f_hat: S,
}

impl<S: Scalar> TrajectoryRecord<S> {
    /// Total re-summed from the individual arc samples and events.
    pub fn ledger_total(&self) -> S {
        let arcs: S = self.arcs.iter().map(ArcRecord::discounted_cost).sum();
        let jumps: S = self.events.iter().map(|e| e.discounted_cost).sum();
        arcs + jumps + self.terminal_cost
    }

    pub fn end_time(&self) -> S {
        self.arcs.last().map_or(S::zero(), |a| a.end)
    }

    /// Smallest gap between consecutive jump times.
    pub fn min_event_gap(&self) -> Option<S> {
        self.events
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .fold(None, |acc: Option<S>, g| Some(acc.map_or(g, |a| a.min(g))))
    }

    /// One JSON object per arc sample or event, in time order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut events = self.events.iter().peekable();
        for arc in &self.arcs {
            for s in &arc.samples {
                let line = serde_json::json!({
                    "type": "sample",
                    "t": s.t.as_f64(),
                    "chart": arc.chart.0,
                    "x": s.coords.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                    "running": s.running.as_f64(),
                    "discounted": s.discounted.as_f64(),
                });
                writeln!(w, "{line}")?;
            }
            if let Some(e) = events.next_if(|e| e.time <= arc.end) {
                let mut value = serde_json::to_value(e)?;
                value["type"] = serde_json::json!("event");
                writeln!(w, "{value}")?;
            }
        }
        for e in events {
            let mut value = serde_json::to_value(e)?;
            value["type"] = serde_json::json!("event");
            writeln!(w, "{value}")?;
        }
        Ok(())
    }

    /// Columns `t, chart, x1.., event_kind, cost_increment, discounted_increment`;
    /// the last column sums to `total_cost`.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self
            .arcs
            .iter()
            .flat_map(|a| a.samples.iter().map(|s| s.coords.len()))
            .chain(self.events.iter().map(|e| e.pre.coords.len().max(e.post.coords.len())))
            .max()
            .unwrap_or(0);
        let mut header = String::from("t,chart");
        for k in 1..=d {
            header.push_str(&format!(",x{k}"));
        }
        header.push_str(",event_kind,cost_increment,discounted_increment");
        writeln!(w, "{header}")?;
        let row = |w: &mut W, t: S, chart: ChartId, x: &[S], kind: &str, raw: S, disc: S| -> Result<()> {
            let mut line = format!("{},{}", fmt17(t), chart.0);
            for k in 0..d {
                line.push(',');
                if let Some(v) = x.get(k) {
                    line.push_str(&fmt17(*v));
                }
            }
            line.push_str(&format!(",{kind},{},{}", fmt17(raw), fmt17(disc)));
            writeln!(w, "{line}")?;
            Ok(())
        };
        let mut events = self.events.iter().peekable();
        for arc in &self.arcs {
            for s in &arc.samples {
                row(&mut w, s.t, arc.chart, &s.coords, "flow", s.running, s.discounted)?;
            }
            if let Some(e) = events.next_if(|e| e.time <= arc.end) {
                let kind = match e.kind {
                    RegionKind::Autonomous => "autonomous",
                    RegionKind::Controlled => "controlled",
                };
                row(
                    &mut w,
                    e.time,
                    e.post.chart,
                    &e.post.coords,
                    kind,
                    e.cost,
                    e.discounted_cost,
                )?;
            }
        }
        if self.terminal_cost != S::zero() || matches!(self.horizon, Horizon::Finite { .. }) {
            if let Some(arc) = self.arcs.last() {
                let s = arc.samples.last().expect("arcs are nonempty");
                row(
                    &mut w,
                    s.t,
                    arc.chart,
                    &s.coords,
                    "terminal",
                    self.terminal_cost,
                    self.terminal_cost,
                )?;
            }
        }
        Ok(())
    }
}

/// Simulates the hybrid system under `strategy` from `x0`.
pub fn simulate<S: Scalar>(
    model: &HybridModel<S>,
    x0: &HybridState<S>,
    strategy: &mut dyn Strategy<S>,
    horizon: Horizon<S>,
    config: &SimConfig<S>,
) -> Result<TrajectoryRecord<S>> {
    model.check_state(x0)?;
    let c = &model.constants;
    let (t_start, t_end, rate) = match horizon {
        Horizon::Stationary { tail_tol } => {
            if !(tail_tol > S::zero()) {
                return Err(Error::InvalidModel("tail tolerance must be positive".into()));
            }
            (S::zero(), S::infinity(), model.lambda())
        }
        Horizon::Finite { start, end } => {
            if !(end > start) {
                return Err(Error::InvalidModel(format!("empty horizon [{start}, {end}]")));
            }
            (start, end, S::zero())
        }
    };
    let f_hat = match horizon {
        Horizon::Stationary { .. } => c.dynamics_bound,
        Horizon::Finite { .. } => c.dynamics_bound * (S::one() + norm(&x0.coords).max(model.default_trunc_radius())),
    };
    let step = config.step.unwrap_or_else(|| default_step(model, f_hat));
    let opts = ArcOptions {
        step,
        discount_rate: rate,
    };
    // stationary tail bound ingredients
    let jump_gap = c.beta / c.dynamics_bound;
    let jump_series = if model.has_jump_sets() {
        S::one() / (S::one() - (-model.lambda() * jump_gap).exp())
    } else {
        S::zero()
    };
    let mut k_bar = S::zero();
    let mut c_bar = c.jump_cost_floor;

    let mut record = TrajectoryRecord {
        horizon,
        arcs: Vec::new(),
        events: Vec::new(),
        running_cost_integral: S::zero(),
        terminal_cost: S::zero(),
        total_cost: S::zero(),
        truncation_bound: None,
        f_hat,
    };
    let mut t = t_start;
    let mut x = x0.clone();
    let mut decide_at_start = model.in_controlled(&x);
    // chunk length between tail-bound checks
    let chunk = match horizon {
        Horizon::Stationary { .. } => step * S::lit(50.0),
        Horizon::Finite { .. } => S::infinity(),
    };

    loop {
        if let Horizon::Stationary { tail_tol } = horizon {
            let bound = (-model.lambda() * t).exp() * (k_bar / model.lambda() + c_bar * jump_series);
            if t > t_start && bound < tail_tol {
                record.truncation_bound = Some(bound);
                break;
            }
        }
        if t >= t_end {
            break;
        }
        if decide_at_start {
            decide_at_start = false;
            if let Some(dest) = strategy.controlled(t, &x) {
                let e = controlled_jump(model, &x, dest, t, rate, strategy.destination_slack())?;
                c_bar = c_bar.max(e.cost);
                record.total_cost = record.total_cost + e.discounted_cost;
                x = e.post.clone();
                record.events.push(e);
                if record.events.len() > config.max_jumps {
                    return Err(Error::TooManyJumps(config.max_jumps));
                }
                decide_at_start = model.in_controlled(&x);
                continue;
            }
        }
        let stop = t_end.min(t + chunk);
        let mut control = |s: S, y: &HybridState<S>| strategy.control(s, y);
        let (arc, hit) = integrate_arc(model, &x, t, &mut control, stop, &opts)?;
        for s in arc.samples.iter().skip(1) {
            let u = strategy.control(s.t, &HybridState::new(arc.chart.0, s.coords.clone()));
            k_bar = k_bar.max(model.running_cost(arc.chart, s.t, &s.coords, &u));
        }
        let arc_cost = arc.discounted_cost();
        record.running_cost_integral = record.running_cost_integral + arc_cost;
        record.total_cost = record.total_cost + arc_cost;
        t = arc.end;
        x = arc.end_state();
        record.arcs.push(arc);
        let Some(hit) = hit else { continue };
        match hit.kind {
            RegionKind::Autonomous => {
                let vi = strategy.autonomous(hit.time, &hit.state);
                let v = model
                    .controls
                    .v
                    .get(vi)
                    .ok_or(Error::EmptyCandidates("discrete control samples"))?;
                let post = apply_autonomous_jump(model, &hit.state, v)?;
                let cost = model.autonomous_cost(hit.state.chart, &hit.state.coords, v);
                let discounted = cost * (-rate * hit.time).exp();
                c_bar = c_bar.max(cost);
                record.total_cost = record.total_cost + discounted;
                record.events.push(JumpEvent {
                    time: hit.time,
                    kind: RegionKind::Autonomous,
                    pre: hit.state,
                    post: post.clone(),
                    choice: vi,
                    cost,
                    discounted_cost: discounted,
                });
                x = post;
                decide_at_start = model.in_controlled(&x);
            }
            RegionKind::Controlled => {
                if let Some(dest) = strategy.controlled(hit.time, &hit.state) {
                    let e = controlled_jump(model, &hit.state, dest, hit.time, rate, strategy.destination_slack())?;
                    c_bar = c_bar.max(e.cost);
                    record.total_cost = record.total_cost + e.discounted_cost;
                    x = e.post.clone();
                    record.events.push(e);
                    decide_at_start = model.in_controlled(&x);
                }
            }
        }
        if record.events.len() > config.max_jumps {
            return Err(Error::TooManyJumps(config.max_jumps));
        }
    }
    if let Horizon::Finite { end, .. } = horizon {
        let h = model.terminal_cost(x.chart, end, &x.coords);
        record.terminal_cost = h;
        record.total_cost = record.total_cost + h;
    }
    Ok(record)
}

fn controlled_jump<S: Scalar>(
    model: &HybridModel<S>,
    x: &HybridState<S>,
    dest: HybridState<S>,
    t: S,
    rate: S,
    slack: S,
) -> Result<JumpEvent<S>> {
    let tol = model.boundary_tol * S::lit(10.0);
    if model.sd_destination(dest.chart, &dest.coords) > tol.max(slack) {
        return Err(Error::ModelFault("controlled jump destination is outside D".into()));
    }
    let cost = model.controlled_cost(x.chart, &x.coords, &dest);
    Ok(JumpEvent {
        time: t,
        kind: RegionKind::Controlled,
        pre: x.clone(),
        choice: dest.chart.0,
        post: dest,
        cost,
        discounted_cost: cost * (-rate * t).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    fn linear_model(rate: f64, threshold: f64) -> HybridModel<f64> {
        let mut doc = fixtures::conveyor_json();
        doc["charts"][0]["domain"] = json!({"type": "box", "lo": [0.0], "hi": [10.0]});
        doc["charts"][0]["A"] = json!({"type": "half_space", "normal": [-1.0], "offset": -threshold});
        doc["dynamics"] = json!([format!("{rate} * x1")]);
        HybridModel::from_value(doc).unwrap()
    }

    fn no_control() -> impl FnMut(f64, &HybridState<f64>) -> Vec<f64> {
        |_, _| vec![0.0]
    }

    #[test]
    fn zero_field_gives_constant_arc() {
        let m = fixtures::constant_cost::<f64>();
        let opts = ArcOptions {
            step: 0.01,
            discount_rate: 0.0,
        };
        let (arc, hit) =
            integrate_arc(&m, &HybridState::new(0, vec![0.3]), 0.0, &mut no_control(), 1.0, &opts).unwrap();
        assert!(hit.is_none());
        assert!(arc.samples.iter().all(|s| s.coords == vec![0.3]));
        assert_abs_diff_eq!(arc.end, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(arc.discounted_cost(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_speed_hits_at_two() {
        let m = fixtures::conveyor::<f64>();
        let opts = ArcOptions {
            step: 0.01,
            discount_rate: 1.0,
        };
        let (_, hit) = integrate_arc(&m, &HybridState::new(0, vec![0.0]), 0.0, &mut no_control(), 10.0, &opts).unwrap();
        let hit = hit.unwrap();
        assert_eq!(hit.kind, RegionKind::Autonomous);
        assert!((hit.time - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn exponential_growth_hits_at_log_ratio() {
        let m = linear_model(1.0, std::f64::consts::E);
        let opts = ArcOptions {
            step: 0.01,
            discount_rate: 0.0,
        };
        let (_, hit) = integrate_arc(&m, &HybridState::new(0, vec![1.0]), 0.0, &mut no_control(), 5.0, &opts).unwrap();
        assert!((hit.unwrap().time - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn hit_time_error_is_fourth_order() {
        let m = linear_model(1.0, std::f64::consts::E);
        let err = |step: f64| {
            let opts = ArcOptions {
                step,
                discount_rate: 0.0,
            };
            let (_, hit) =
                integrate_arc(&m, &HybridState::new(0, vec![1.0]), 0.0, &mut no_control(), 5.0, &opts).unwrap();
            (hit.unwrap().time - 1.0).abs()
        };
        let (e1, e2) = (err(0.2), err(0.1));
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "order {order} from {e1:e} -> {e2:e}");
    }

    #[test]
    fn start_inside_autonomous_set_jumps_immediately() {
        let m = fixtures::conveyor::<f64>();
        let opts = ArcOptions {
            step: 0.01,
            discount_rate: 1.0,
        };
        let (arc, hit) =
            integrate_arc(&m, &HybridState::new(0, vec![2.5]), 0.7, &mut no_control(), 10.0, &opts).unwrap();
        assert_eq!(arc.samples.len(), 1);
        assert_eq!(hit.unwrap().time, 0.7);
    }

    #[test]
    fn leaving_the_domain_elsewhere_is_a_fault() {
        let mut doc = fixtures::conveyor_json();
        doc["dynamics"] = json!(["-1"]);
        let m: HybridModel<f64> = HybridModel::from_value(doc).unwrap();
        let opts = ArcOptions {
            step: 0.01,
            discount_rate: 1.0,
        };
        let r = integrate_arc(&m, &HybridState::new(0, vec![0.5]), 0.0, &mut no_control(), 10.0, &opts);
        assert!(matches!(r, Err(Error::ModelFault(_))));
    }

    #[test]
    fn autonomous_jump_examples() {
        let m = fixtures::conveyor::<f64>();
        let y = apply_autonomous_jump(&m, &HybridState::new(0, vec![2.0]), &[0.0]).unwrap();
        assert_eq!(y, HybridState::new(0, vec![0.5]));
        assert!(apply_autonomous_jump(&m, &HybridState::new(0, vec![1.0]), &[0.0]).is_err());

        let two = fixtures::two_chart::<f64>();
        let y = apply_autonomous_jump(&two, &HybridState::new(0, vec![2.0]), &[0.0]).unwrap();
        assert_eq!(y.chart, ChartId(1));
        assert_eq!(y.coords, vec![0.0, 0.0]);

        let mut doc = fixtures::conveyor_json();
        doc["jump_map"] = json!({"target": 0, "coords": ["1.5"]});
        let bad: HybridModel<f64> = HybridModel::from_value(doc).unwrap();
        assert!(matches!(
            apply_autonomous_jump(&bad, &HybridState::new(0, vec![2.0]), &[0.0]),
            Err(Error::ModelFault(_))
        ));
    }

    #[test]
    fn constant_cost_stationary_total_is_one_over_lambda() {
        let m = fixtures::constant_cost::<f64>();
        let tail = 1e-6;
        let mut s = ExplicitStrategy::default();
        s.bind(&m);
        let r = simulate(
            &m,
            &HybridState::new(0, vec![0.0]),
            &mut s,
            Horizon::Stationary { tail_tol: tail },
            &SimConfig::default(),
        )
        .unwrap();
        assert!((r.total_cost - 1.0).abs() <= tail);
        assert!(r.truncation_bound.unwrap() < tail);
        assert!(r.events.is_empty());
    }

    #[test]
    fn finite_constant_cost_is_horizon_length() {
        let m = fixtures::constant_cost::<f64>();
        let mut s = ExplicitStrategy::default();
        s.bind(&m);
        let r = simulate(
            &m,
            &HybridState::new(0, vec![0.0]),
            &mut s,
            Horizon::Finite { start: 0.0, end: 2.0 },
            &SimConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.total_cost, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.end_time(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn conveyor_loop_matches_geometric_series() {
        let m = fixtures::conveyor::<f64>();
        let mut s = ExplicitStrategy::default();
        s.bind(&m);
        let r = simulate(
            &m,
            &HybridState::new(0, vec![0.5]),
            &mut s,
            Horizon::Stationary { tail_tol: 1e-7 },
            &SimConfig::default(),
        )
        .unwrap();
        assert!((r.total_cost - fixtures::conveyor_value_at_half()).abs() <= 1e-4);
        assert!((r.ledger_total() - r.total_cost).abs() <= 1e-10);
        let gap = r.min_event_gap().unwrap();
        assert!(gap >= m.constants.beta / r.f_hat - 1e-9);
        assert_abs_diff_eq!(gap, 1.5, epsilon = 1e-9);
        for e in &r.events {
            assert!(m.in_destination(&e.post));
            assert!(e.cost >= m.constants.jump_cost_floor);
        }
    }

    #[test]
    fn two_chart_run_changes_charts() {
        let m = fixtures::two_chart::<f64>();
        let mut s = ExplicitStrategy::default();
        s.bind(&m);
        let r = simulate(
            &m,
            &HybridState::new(0, vec![1.0]),
            &mut s,
            Horizon::Finite { start: 0.0, end: 4.0 },
            &SimConfig::default(),
        )
        .unwrap();
        assert_eq!(r.events.len(), 2);
        assert_eq!(r.events[0].post.chart, ChartId(1));
        assert_eq!(r.events[1].post.chart, ChartId(0));
        assert_abs_diff_eq!(r.total_cost, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.events[1].time, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn explicit_controlled_jumps() {
        let m = fixtures::attractor::<f64>();
        let dest = HybridState::new(0, vec![0.5]);
        let mut s = ExplicitStrategy::new(vec![(0.0, vec![1.0])], vec![], vec![Some(dest.clone()), None]);
        s.bind(&m);
        let r = simulate(
            &m,
            &HybridState::new(0, vec![0.5]),
            &mut s,
            Horizon::Finite { start: 0.0, end: 5.0 },
            &SimConfig::default(),
        )
        .unwrap();
        assert_eq!(r.events.len(), 1);
        let e = &r.events[0];
        assert_eq!(e.kind, RegionKind::Controlled);
        assert_abs_diff_eq!(e.pre.coords[0], 1.5, epsilon = 1e-8);
        assert_abs_diff_eq!(e.cost, 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(r.ledger_total(), r.total_cost, epsilon = 1e-10);
    }

    #[test]
    fn outputs_are_consistent() {
        let m = fixtures::conveyor::<f64>();
        let mut s = ExplicitStrategy::default();
        s.bind(&m);
        let r = simulate(
            &m,
            &HybridState::new(0, vec![0.5]),
            &mut s,
            Horizon::Stationary { tail_tol: 1e-4 },
            &SimConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,chart,x1,event_kind,cost_increment,discounted_increment"
        );
        let total: f64 = lines
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        assert_abs_diff_eq!(total, r.total_cost, epsilon = 1e-10);

        let mut buf = Vec::new();
        r.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let events = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|v| v["type"] == "event")
            .count();
        assert_eq!(events, r.events.len());
    }
}
