//! Problem data: charts, jump regions, dynamics, costs and declared constants.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, VarUsage};
use crate::geometry::{Region, BOUNDARY_TOLERANCE};
use crate::scalar::Scalar;

/// Index of a chart `Ω_i` in the disjoint union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChartId(pub usize);

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point of the hybrid state space: chart plus coordinates in that chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct HybridState<S> {
    pub chart: ChartId,
    pub coords: Vec<S>,
}

impl<S: Scalar> HybridState<S> {
    pub fn new(chart: usize, coords: Vec<S>) -> Self {
        Self {
            chart: ChartId(chart),
            coords,
        }
    }
}

/// Which jump region a point or grid node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Autonomous,
    Controlled,
}

/// Finite samples of the continuous control set `U` and the discrete set `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ControlGrid<S> {
    pub u: Vec<Vec<S>>,
    #[serde(default = "default_v")]
    pub v: Vec<Vec<S>>,
}

fn default_v<S: Scalar>() -> Vec<Vec<S>> {
    vec![vec![S::zero()]]
}

impl<S: Scalar> ControlGrid<S> {
    pub fn check(&self) -> Result<()> {
        if self.u.is_empty() {
            return Err(Error::EmptyCandidates("continuous control samples"));
        }
        if self.v.is_empty() {
            return Err(Error::EmptyCandidates("discrete control samples"));
        }
        let m = self.u[0].len();
        if self.u.iter().any(|u| u.len() != m) {
            return Err(Error::InvalidModel("control samples differ in length".into()));
        }
        let q = self.v[0].len();
        if self.v.iter().any(|v| v.len() != q) {
            return Err(Error::InvalidModel("discrete control samples differ in length".into()));
        }
        Ok(())
    }
}

/// User-declared constants; audited by sampling, never inferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Constants<S> {
    /// Discount rate.
    pub lambda: S,
    /// Bound on `|f|` (stationary) or linear-growth constant (finite horizon).
    #[serde(rename = "F")]
    pub dynamics_bound: S,
    /// Lipschitz constant of `f` in the state.
    #[serde(rename = "L")]
    pub lipschitz: S,
    /// Lipschitz constant of the jump map.
    #[serde(rename = "G", default)]
    pub jump_lipschitz: S,
    /// Separation between `A` and `C`, and between `A` and `D`.
    pub beta: S,
    /// Transversality margin.
    pub xi0: S,
    /// Destinations satisfy `|x| < R`.
    #[serde(rename = "R")]
    pub destination_radius: S,
    /// Polynomial growth degree of the costs.
    #[serde(default)]
    pub k: S,
    /// Lower bound on both jump costs.
    #[serde(rename = "C_prime")]
    pub jump_cost_floor: S,
}

/// Target chart of an autonomous jump: fixed, or an expression of `(x, v)`
/// rounded to the nearest chart index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JumpTarget {
    Fixed(usize),
    Computed(Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMap {
    #[serde(default = "default_target")]
    pub target: JumpTarget,
    pub coords: Vec<Expr>,
}

fn default_target() -> JumpTarget {
    JumpTarget::Fixed(0)
}

/// Either one value shared by all charts or one value per chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerChart<T> {
    Each(Vec<T>),
    All(T),
}

impl<T: Clone> PerChart<T> {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            PerChart::All(v) => Ok(vec![v.clone(); n]),
            PerChart::Each(vs) if vs.len() == n => Ok(vs.clone()),
            PerChart::Each(vs) => Err(Error::InvalidModel(format!(
                "{what}: expected {n} entries (one per chart), got {}",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ChartDocument<S> {
    pub dim: usize,
    pub domain: Region<S>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub autonomous: Option<Region<S>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub controlled: Option<Region<S>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<Region<S>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostsDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running: Option<PerChart<Expr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub autonomous: Option<PerChart<Expr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controlled: Option<PerChart<Expr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<PerChart<Expr>>,
}

/// On-disk model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ModelDocument<S> {
    pub charts: Vec<ChartDocument<S>>,
    pub controls: ControlGrid<S>,
    pub dynamics: PerChart<Vec<Expr>>,
    #[serde(default)]
    pub jump_map: Option<PerChart<Option<JumpMap>>>,
    #[serde(default)]
    pub costs: CostsDocument,
    pub constants: Constants<S>,
}

/// One Euclidean chart with its regions and data.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart<S> {
    pub dim: usize,
    pub domain: Region<S>,
    pub autonomous: Option<Region<S>>,
    pub controlled: Option<Region<S>>,
    pub destination: Option<Region<S>>,
    pub dynamics: Vec<Expr>,
    pub jump_map: Option<JumpMap>,
    pub running_cost: Expr,
    pub autonomous_cost: Expr,
    pub controlled_cost: Expr,
    pub terminal_cost: Expr,
}

/// The full problem description. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel<S> {
    pub charts: Vec<Chart<S>>,
    pub controls: ControlGrid<S>,
    pub constants: Constants<S>,
    pub boundary_tol: S,
    c_meets_d: bool,
}

impl<S: Scalar> HybridModel<S> {
    pub fn from_document(doc: ModelDocument<S>) -> Result<Self> {
        let n = doc.charts.len();
        if n == 0 {
            return Err(Error::InvalidModel("model has no charts".into()));
        }
        doc.controls.check()?;
        let dynamics = doc.dynamics.expand(n, "dynamics")?;
        let jump_maps = match &doc.jump_map {
            Some(j) => j.expand(n, "jump_map")?,
            None => vec![None; n],
        };
        let zero = Expr::constant(0.0);
        let running = match &doc.costs.running {
            Some(c) => c.expand(n, "costs.running")?,
            None => vec![zero.clone(); n],
        };
        let terminal = match &doc.costs.terminal {
            Some(c) => c.expand(n, "costs.terminal")?,
            None => vec![zero.clone(); n],
        };
        let autonomous = doc
            .costs
            .autonomous
            .as_ref()
            .map(|c| c.expand(n, "costs.autonomous"))
            .transpose()?;
        let controlled = doc
            .costs
            .controlled
            .as_ref()
            .map(|c| c.expand(n, "costs.controlled"))
            .transpose()?;

        let mut charts = Vec::with_capacity(n);
        for (i, cd) in doc.charts.into_iter().enumerate() {
            let has_a = cd.autonomous.is_some();
            let has_c = cd.controlled.is_some();
            let autonomous_cost = match (&autonomous, has_a) {
                (Some(c), _) => c[i].clone(),
                (None, false) => zero.clone(),
                (None, true) => {
                    return Err(Error::InvalidModel(format!(
                        "chart {i} has an autonomous set but no costs.autonomous"
                    )))
                }
            };
            let controlled_cost = match (&controlled, has_c) {
                (Some(c), _) => c[i].clone(),
                (None, false) => zero.clone(),
                (None, true) => {
                    return Err(Error::InvalidModel(format!(
                        "chart {i} has a controlled set but no costs.controlled"
                    )))
                }
            };
            if has_a && jump_maps[i].is_none() {
                return Err(Error::InvalidModel(format!(
                    "chart {i} has an autonomous set but no jump_map entry"
                )));
            }
            charts.push(Chart {
                dim: cd.dim,
                domain: cd.domain,
                autonomous: cd.autonomous,
                controlled: cd.controlled,
                destination: cd.destination,
                dynamics: dynamics[i].clone(),
                jump_map: jump_maps[i].clone(),
                running_cost: running[i].clone(),
                autonomous_cost,
                controlled_cost,
                terminal_cost: terminal[i].clone(),
            });
        }
        Self::new(charts, doc.controls, doc.constants)
    }

    pub fn new(charts: Vec<Chart<S>>, controls: ControlGrid<S>, constants: Constants<S>) -> Result<Self> {
        let mut model = Self {
            charts,
            controls,
            constants,
            boundary_tol: S::lit(BOUNDARY_TOLERANCE),
            c_meets_d: false,
        };
        model.check_structure()?;
        model.c_meets_d = model.detect_c_meets_d();
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument<S> = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let doc: ModelDocument<S> = serde_json::from_value(value)?;
        Self::from_document(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Converts back to the on-disk layout (one entry per chart everywhere).
    pub fn to_document(&self) -> ModelDocument<S> {
        let each = |f: &dyn Fn(&Chart<S>) -> Expr| Some(PerChart::Each(self.charts.iter().map(f).collect()));
        ModelDocument {
            charts: self
                .charts
                .iter()
                .map(|c| ChartDocument {
                    dim: c.dim,
                    domain: c.domain.clone(),
                    autonomous: c.autonomous.clone(),
                    controlled: c.controlled.clone(),
                    destination: c.destination.clone(),
                })
                .collect(),
            controls: self.controls.clone(),
            dynamics: PerChart::Each(self.charts.iter().map(|c| c.dynamics.clone()).collect()),
            jump_map: Some(PerChart::Each(self.charts.iter().map(|c| c.jump_map.clone()).collect())),
            costs: CostsDocument {
                running: each(&|c| c.running_cost.clone()),
                autonomous: each(&|c| c.autonomous_cost.clone()),
                controlled: each(&|c| c.controlled_cost.clone()),
                terminal: each(&|c| c.terminal_cost.clone()),
            },
            constants: self.constants.clone(),
        }
    }

    fn check_structure(&self) -> Result<()> {
        let m = self.controls.u[0].len();
        let q = self.controls.v[0].len();
        let max_dim = self.charts.iter().map(|c| c.dim).max().unwrap_or(0);
        for (i, chart) in self.charts.iter().enumerate() {
            let ctx = |what: &str| format!("chart {i}: {what}");
            if chart.dim == 0 {
                return Err(Error::InvalidModel(ctx("dimension must be positive")));
            }
            chart.domain.check(chart.dim)?;
            for r in [&chart.autonomous, &chart.controlled, &chart.destination]
                .into_iter()
                .flatten()
            {
                r.check(chart.dim)?;
            }
            if chart.dynamics.len() != chart.dim {
                return Err(Error::InvalidModel(ctx(&format!(
                    "dynamics has {} components for dimension {}",
                    chart.dynamics.len(),
                    chart.dim
                ))));
            }
            let state_ok = |u: VarUsage, allow_t: bool, allow_u: bool, allow_v: bool| {
                u.x <= chart.dim
                    && (allow_t || !u.t)
                    && (allow_u || u.u == 0)
                    && u.u <= m
                    && (allow_v || u.v == 0)
                    && u.v <= q
                    && u.y == 0
                    && !u.dest
            };
            for e in &chart.dynamics {
                if !state_ok(e.usage(), true, true, false) {
                    return Err(Error::InvalidModel(ctx(&format!(
                        "dynamics `{e}` uses unbound variables"
                    ))));
                }
            }
            if !state_ok(chart.running_cost.usage(), true, true, false) {
                return Err(Error::InvalidModel(ctx("running cost uses unbound variables")));
            }
            if !state_ok(chart.autonomous_cost.usage(), false, false, true) {
                return Err(Error::InvalidModel(ctx("autonomous jump cost uses unbound variables")));
            }
            if !state_ok(chart.terminal_cost.usage(), true, false, false) {
                return Err(Error::InvalidModel(ctx("terminal cost uses unbound variables")));
            }
            let cu = chart.controlled_cost.usage();
            if cu.x > chart.dim || cu.y > max_dim || cu.u > 0 || cu.v > 0 || cu.t {
                return Err(Error::InvalidModel(ctx("controlled jump cost uses unbound variables")));
            }
            if let Some(jm) = &chart.jump_map {
                let target_dim = match &jm.target {
                    JumpTarget::Fixed(j) => {
                        let c = self.charts.get(*j).ok_or_else(|| {
                            Error::InvalidModel(ctx(&format!("jump target chart {j} does not exist")))
                        })?;
                        Some(c.dim)
                    }
                    JumpTarget::Computed(e) => {
                        if !state_ok(e.usage(), false, false, true) {
                            return Err(Error::InvalidModel(ctx("jump target uses unbound variables")));
                        }
                        None
                    }
                };
                if let Some(d) = target_dim {
                    if jm.coords.len() != d {
                        return Err(Error::InvalidModel(ctx(&format!(
                            "jump map yields {} coordinates for a {d}-dimensional target",
                            jm.coords.len()
                        ))));
                    }
                }
                for e in &jm.coords {
                    if !state_ok(e.usage(), false, false, true) {
                        return Err(Error::InvalidModel(ctx("jump map uses unbound variables")));
                    }
                }
            }
        }
        if self.charts.iter().any(|c| c.controlled.is_some()) && !self.charts.iter().any(|c| c.destination.is_some()) {
            return Err(Error::InvalidModel(
                "controlled jumps need at least one destination set".into(),
            ));
        }
        Ok(())
    }

    pub fn chart_count(&self) -> usize {
        self.charts.len()
    }

    pub fn chart(&self, id: ChartId) -> &Chart<S> {
        &self.charts[id.0]
    }

    pub fn dim(&self, id: ChartId) -> usize {
        self.charts[id.0].dim
    }

    pub fn lambda(&self) -> S {
        self.constants.lambda
    }

    pub fn has_jump_sets(&self) -> bool {
        self.charts
            .iter()
            .any(|c| c.autonomous.is_some() || c.controlled.is_some())
    }

    /// Whether some controlled-jump set meets a destination set.
    pub fn c_meets_d(&self) -> bool {
        self.c_meets_d
    }

    pub fn is_time_dependent(&self) -> bool {
        self.charts
            .iter()
            .any(|c| c.running_cost.usage().t || c.dynamics.iter().any(|e| e.usage().t))
    }

    /// Default half-width of the truncated computational window:
    /// `4R` plus the distance covered in one discount time `1/λ`.
    pub fn default_trunc_radius(&self) -> S {
        let c = &self.constants;
        S::lit(4.0) * c.destination_radius + c.dynamics_bound / c.lambda
    }

    /// Bounding window of a chart's domain intersected with `[-r, r]^d`.
    pub fn window(&self, id: ChartId, radius: S) -> (Vec<S>, Vec<S>) {
        let chart = self.chart(id);
        let d = chart.dim;
        let (lo, hi) = chart
            .domain
            .bounding_box()
            .unwrap_or_else(|| (vec![-radius; d], vec![radius; d]));
        (
            lo.into_iter().map(|v| v.max(-radius)).collect(),
            hi.into_iter().map(|v| v.min(radius)).collect(),
        )
    }

    pub fn dynamics_into(&self, id: ChartId, t: S, x: &[S], u: &[S], out: &mut [S]) {
        let env = Env::new(x).time(t).control(u).on_chart(id.0);
        for (o, e) in out.iter_mut().zip(&self.chart(id).dynamics) {
            *o = e.eval(&env);
        }
    }

    pub fn dynamics(&self, id: ChartId, t: S, x: &[S], u: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.dim(id)];
        self.dynamics_into(id, t, x, u, &mut out);
        out
    }

    pub fn running_cost(&self, id: ChartId, t: S, x: &[S], u: &[S]) -> S {
        let env = Env::new(x).time(t).control(u).on_chart(id.0);
        self.chart(id).running_cost.eval(&env)
    }

    pub fn autonomous_cost(&self, id: ChartId, x: &[S], v: &[S]) -> S {
        let env = Env::new(x).discrete(v).on_chart(id.0);
        self.chart(id).autonomous_cost.eval(&env)
    }

    pub fn controlled_cost(&self, id: ChartId, x: &[S], dest: &HybridState<S>) -> S {
        let env = Env::new(x).destination(dest.chart.0, &dest.coords).on_chart(id.0);
        self.chart(id).controlled_cost.eval(&env)
    }

    pub fn terminal_cost(&self, id: ChartId, t: S, x: &[S]) -> S {
        let env = Env::new(x).time(t).on_chart(id.0);
        self.chart(id).terminal_cost.eval(&env)
    }

    /// Evaluates the jump map `g(x, v)`; fails if there is no map or the
    /// computed target chart is invalid.
    pub fn jump_map(&self, id: ChartId, x: &[S], v: &[S]) -> Result<HybridState<S>> {
        let jm = self
            .chart(id)
            .jump_map
            .as_ref()
            .ok_or_else(|| Error::ModelFault(format!("chart {id} has no jump map")))?;
        let env = Env::new(x).discrete(v).on_chart(id.0);
        let target = match &jm.target {
            JumpTarget::Fixed(j) => *j,
            JumpTarget::Computed(e) => {
                let raw = e.eval(&env).as_f64().round();
                if !(raw >= 0.0 && (raw as usize) < self.charts.len()) {
                    return Err(Error::ModelFault(format!("jump target {raw} is not a chart")));
                }
                raw as usize
            }
        };
        let coords: Vec<S> = jm.coords.iter().map(|e| e.eval(&env)).collect();
        if coords.len() != self.charts[target].dim {
            return Err(Error::ModelFault(format!(
                "jump map yields {} coordinates for chart {target}",
                coords.len()
            )));
        }
        Ok(HybridState::new(target, coords))
    }

    pub fn sd_autonomous(&self, id: ChartId, x: &[S]) -> S {
        self.chart(id).autonomous.as_ref().map_or(S::infinity(), |r| r.sd(x))
    }

    pub fn sd_controlled(&self, id: ChartId, x: &[S]) -> S {
        self.chart(id).controlled.as_ref().map_or(S::infinity(), |r| r.sd(x))
    }

    pub fn sd_destination(&self, id: ChartId, x: &[S]) -> S {
        self.chart(id).destination.as_ref().map_or(S::infinity(), |r| r.sd(x))
    }

    pub fn sd_domain(&self, id: ChartId, x: &[S]) -> S {
        self.chart(id).domain.sd(x)
    }

    pub fn sd_region(&self, kind: RegionKind, id: ChartId, x: &[S]) -> S {
        match kind {
            RegionKind::Autonomous => self.sd_autonomous(id, x),
            RegionKind::Controlled => self.sd_controlled(id, x),
        }
    }

    pub fn in_autonomous(&self, s: &HybridState<S>) -> bool {
        self.sd_autonomous(s.chart, &s.coords) <= self.boundary_tol
    }

    pub fn in_controlled(&self, s: &HybridState<S>) -> bool {
        self.sd_controlled(s.chart, &s.coords) <= self.boundary_tol
    }

    pub fn in_destination(&self, s: &HybridState<S>) -> bool {
        self.sd_destination(s.chart, &s.coords) <= self.boundary_tol
    }

    pub fn check_state(&self, s: &HybridState<S>) -> Result<()> {
        let chart = self
            .charts
            .get(s.chart.0)
            .ok_or_else(|| Error::InvalidModel(format!("chart {} does not exist", s.chart)))?;
        if s.coords.len() != chart.dim {
            return Err(Error::DimensionMismatch {
                expected: chart.dim,
                got: s.coords.len(),
            });
        }
        Ok(())
    }

    fn detect_c_meets_d(&self) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let radius = self.default_trunc_radius();
        for (i, chart) in self.charts.iter().enumerate() {
            let (Some(c), Some(d)) = (&chart.controlled, &chart.destination) else {
                continue;
            };
            let (lo, hi) = self.window(ChartId(i), radius);
            let window = (lo.as_slice(), hi.as_slice());
            let hits = |a: &Region<S>, b: &Region<S>, rng: &mut ChaCha8Rng| {
                a.sample_interior(rng, 512, window)
                    .into_iter()
                    .chain(a.sample_boundary(rng, 256, window))
                    .any(|p| b.sd(&p) <= self.boundary_tol)
            };
            if hits(c, d, &mut rng) || hits(d, c, &mut rng) {
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn conveyor() -> serde_json::Value {
        json!({
            "charts": [{
                "dim": 1,
                "domain": {"type": "box", "lo": [0.0], "hi": [3.0]},
                "A": {"type": "half_space", "normal": [-1.0], "offset": -2.0},
                "D": {"type": "ball", "center": [0.5], "radius": 0.25}
            }],
            "controls": {"u": [[0.0]], "v": [[0.0]]},
            "dynamics": ["1"],
            "jump_map": {"target": 0, "coords": ["0.5"]},
            "costs": {"running": "0", "autonomous": "1"},
            "constants": {"lambda": 1.0, "F": 1.0, "L": 1.0, "G": 0.0, "beta": 1.0,
                          "xi0": 0.25, "R": 1.0, "k": 0.0, "C_prime": 1.0}
        })
    }

    #[test]
    fn loads_shared_and_per_chart_entries() {
        let m = HybridModel::<f64>::from_value(conveyor()).unwrap();
        assert_eq!(m.chart_count(), 1);
        let c = ChartId(0);
        assert_eq!(m.dynamics(c, 0.0, &[1.0], &[0.0]), vec![1.0]);
        assert_eq!(m.autonomous_cost(c, &[2.0], &[0.0]), 1.0);
        assert_eq!(m.jump_map(c, &[2.0], &[0.0]).unwrap(), HybridState::new(0, vec![0.5]));
        assert_eq!(m.sd_autonomous(c, &[2.5]), -0.5);
        assert!(m.sd_controlled(c, &[2.5]).is_infinite());
        assert!(!m.c_meets_d());
        assert!(!m.is_time_dependent());
    }

    #[test]
    fn document_round_trip() {
        let m = HybridModel::<f64>::from_value(conveyor()).unwrap();
        let text = serde_json::to_string(&m.to_document()).unwrap();
        let back = HybridModel::<f64>::from_json(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn missing_jump_cost_is_rejected() {
        let mut v = conveyor();
        v["costs"].as_object_mut().unwrap().remove("autonomous");
        assert!(matches!(HybridModel::<f64>::from_value(v), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn unbound_variables_are_rejected() {
        let mut v = conveyor();
        v["dynamics"] = json!(["x2"]);
        assert!(HybridModel::<f64>::from_value(v).is_err());
        let mut v = conveyor();
        v["costs"]["autonomous"] = json!("u1");
        assert!(HybridModel::<f64>::from_value(v).is_err());
    }

    #[test]
    fn wrong_per_chart_count_is_rejected() {
        let mut v = conveyor();
        v["dynamics"] = json!([["1"], ["1"]]);
        assert!(HybridModel::<f64>::from_value(v).is_err());
    }

    #[test]
    fn detects_controlled_destination_overlap() {
        let mut v = conveyor();
        v["charts"][0]["C"] = json!({"type": "ball", "center": [0.6], "radius": 0.1});
        v["costs"]["controlled"] = json!("1");
        let m = HybridModel::<f64>::from_value(v).unwrap();
        assert!(m.c_meets_d());
    }

    #[test]
    fn computed_jump_target() {
        let v = json!({
            "charts": [
                {"dim": 1, "domain": {"type": "box", "lo": [0.0], "hi": [3.0]},
                 "A": {"type": "half_space", "normal": [-1.0], "offset": -2.0}},
                {"dim": 2, "domain": {"type": "box", "lo": [-1.0, -1.0], "hi": [1.0, 1.0]},
                 "D": {"type": "ball", "center": [0.0, 0.0], "radius": 0.5}}
            ],
            "controls": {"u": [[0.0]], "v": [[1.0]]},
            "dynamics": [["1"], ["0", "0"]],
            "jump_map": [{"target": "v1", "coords": ["0.1", "x1 - 2"]}, null],
            "costs": {"autonomous": "1"},
            "constants": {"lambda": 1.0, "F": 1.0, "L": 1.0, "beta": 1.0,
                          "xi0": 0.25, "R": 1.0, "C_prime": 1.0}
        });
        let m = HybridModel::<f64>::from_value(v).unwrap();
        let s = m.jump_map(ChartId(0), &[2.25], &[1.0]).unwrap();
        assert_eq!(s, HybridState::new(1, vec![0.1, 0.25]));
        assert!(m.jump_map(ChartId(0), &[2.25], &[7.0]).is_err());
    }
}
