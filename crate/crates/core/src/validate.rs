//! Sampling audit of the standing assumptions on a model.
//!
//! Declared constants are never inferred: sampling can only refute them.
//! Every check produces a report entry; nothing here returns an error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{random_direction, uniform};
use crate::model::{ChartId, HybridModel, HybridState};
use crate::scalar::{distance, dot, norm, Scalar};

/// Which flavour of the dynamics assumptions to audit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMode {
    /// Bounded, globally Lipschitz dynamics and `λ > kL`.
    #[default]
    Stationary,
    /// Linear growth `|f| ≤ F(1 + |x|)` on `[0, horizon]`.
    FiniteHorizon { horizon: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub samples: usize,
    pub seed: u64,
    pub mode: AuditMode,
    /// Half-width of the sampling window for unbounded domains.
    pub trunc_radius: Option<f64>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            samples: 64,
            seed: 0,
            mode: AuditMode::Stationary,
            trunc_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub name: String,
    pub assumption: String,
    pub passed: bool,
    /// Smallest slack observed (negative when violated).
    pub margin: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub samples: usize,
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&ValidationEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

/// Tracks the worst slack of a family of inequalities `value ≤ bound`.
struct Slack {
    margin: f64,
    count: usize,
    witness: Option<String>,
}

impl Slack {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            count: 0,
            witness: None,
        }
    }

    fn observe(&mut self, slack: f64, witness: impl FnOnce() -> String) {
        self.count += 1;
        if slack < self.margin || slack.is_nan() {
            self.margin = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
            self.witness = Some(witness());
        }
    }

    fn entry(self, name: &str, assumption: &str, tol: f64) -> ValidationEntry {
        let vacuous = self.count == 0;
        ValidationEntry {
            name: name.to_string(),
            assumption: assumption.to_string(),
            passed: vacuous || self.margin >= -tol,
            margin: if vacuous { f64::INFINITY } else { self.margin },
            samples: self.count,
            witness: self.witness,
        }
    }
}

fn fmt_point<S: Scalar>(chart: usize, x: &[S]) -> String {
    let coords: Vec<String> = x.iter().map(|v| format!("{:.6}", v.as_f64())).collect();
    format!("chart {chart} at ({})", coords.join(", "))
}

struct ChartSamples<S> {
    domain: Vec<Vec<S>>,
    domain_boundary: Vec<Vec<S>>,
    a_boundary: Vec<Vec<S>>,
    a_all: Vec<Vec<S>>,
    c_boundary: Vec<Vec<S>>,
    c_all: Vec<Vec<S>>,
    d_all: Vec<Vec<S>>,
}

fn sample_chart<S: Scalar>(
    model: &HybridModel<S>,
    id: ChartId,
    n: usize,
    radius: S,
    rng: &mut ChaCha8Rng,
) -> ChartSamples<S> {
    let chart = model.chart(id);
    let (lo, hi) = model.window(id, radius);
    let window = (lo.as_slice(), hi.as_slice());
    let tol = model.boundary_tol;
    let in_domain = |p: &Vec<S>| chart.domain.sd(p) <= tol;
    let mut domain = chart.domain.sample_interior(rng, n, window);
    domain.extend(chart.domain.sample_boundary(rng, n / 4 + 1, window));
    let domain_boundary = chart.domain.sample_boundary(rng, n, window);
    let region = |r: &Option<crate::geometry::Region<S>>, rng: &mut ChaCha8Rng| match r {
        Some(r) => {
            let boundary: Vec<Vec<S>> = r
                .sample_boundary(rng, n, window)
                .into_iter()
                .filter(in_domain)
                .collect();
            let mut all: Vec<Vec<S>> = r
                .sample_interior(rng, n, window)
                .into_iter()
                .filter(in_domain)
                .collect();
            all.extend(boundary.iter().cloned());
            (boundary, all)
        }
        None => (Vec::new(), Vec::new()),
    };
    let (a_boundary, a_all) = region(&chart.autonomous, rng);
    let (c_boundary, c_all) = region(&chart.controlled, rng);
    let (_, d_all) = region(&chart.destination, rng);
    ChartSamples {
        domain,
        domain_boundary,
        a_boundary,
        a_all,
        c_boundary,
        c_all,
        d_all,
    }
}

/// Audits assumptions with the default configuration and `samples` points
/// per sampled set.
pub fn validate_model<S: Scalar>(model: &HybridModel<S>, samples: usize) -> ValidationReport {
    validate_model_with(
        model,
        &ValidationConfig {
            samples,
            ..ValidationConfig::default()
        },
    )
}

pub fn validate_model_with<S: Scalar>(model: &HybridModel<S>, config: &ValidationConfig) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let c = &model.constants;
    let n = config.samples.max(4);
    let radius = config
        .trunc_radius
        .map(S::lit)
        .unwrap_or_else(|| model.default_trunc_radius());
    let tol = model.boundary_tol.as_f64();
    let rel = 1e-9;
    let times: Vec<S> = match config.mode {
        AuditMode::Stationary => vec![S::zero()],
        AuditMode::FiniteHorizon { horizon } => {
            if model.is_time_dependent() {
                (0..=4).map(|k| S::lit(horizon * k as f64 / 4.0)).collect()
            } else {
                vec![S::zero()]
            }
        }
    };
    let samples: Vec<ChartSamples<S>> = (0..model.chart_count())
        .map(|i| sample_chart(model, ChartId(i), n, radius, &mut rng))
        .collect();

    let mut entries = Vec::new();

    // constants
    let mut consts = Slack::new();
    let positive = [
        ("lambda", c.lambda),
        ("F", c.dynamics_bound),
        ("L", c.lipschitz),
        ("beta", c.beta),
        ("xi0", c.xi0),
        ("C_prime", c.jump_cost_floor),
        ("R", c.destination_radius),
    ];
    for (name, v) in positive {
        let v = v.as_f64();
        consts.observe(if v > 0.0 { v } else { v.min(-f64::MIN_POSITIVE) }, || {
            format!("{name} = {v}")
        });
    }
    for (name, v) in [("G", c.jump_lipschitz), ("k", c.k)] {
        let v = v.as_f64();
        consts.observe(if v >= 0.0 { 1.0 } else { v }, || format!("{name} = {v}"));
    }
    entries.push(consts.entry("constants_positive", "A2-A6, C2", 0.0));

    let mut ctrl = Slack::new();
    ctrl.observe(
        if model.controls.u.is_empty() || model.controls.v.is_empty() {
            -1.0
        } else {
            1.0
        },
        || "empty control samples".into(),
    );
    entries.push(ctrl.entry("control_sets_nonempty", "A7", 0.0));

    // separation A-C and A-D
    let beta = c.beta.as_f64();
    let mut sep_ac = Slack::new();
    let mut sep_ad = Slack::new();
    for (i, s) in samples.iter().enumerate() {
        let id = ChartId(i);
        for p in &s.a_all {
            let dc = model.sd_controlled(id, p).as_f64();
            if dc.is_finite() {
                sep_ac.observe(dc - beta, || fmt_point(i, p));
            }
            let dd = model.sd_destination(id, p).as_f64();
            if dd.is_finite() {
                sep_ad.observe(dd - beta, || fmt_point(i, p));
            }
        }
        for p in &s.c_all {
            let da = model.sd_autonomous(id, p).as_f64();
            if da.is_finite() {
                sep_ac.observe(da - beta, || fmt_point(i, p));
            }
        }
        for p in &s.d_all {
            let da = model.sd_autonomous(id, p).as_f64();
            if da.is_finite() {
                sep_ad.observe(da - beta, || fmt_point(i, p));
            }
        }
    }
    entries.push(sep_ac.entry("separation_a_c", "A6", tol));
    entries.push(sep_ad.entry("separation_a_d", "A6", tol));

    // destinations bounded by R
    let r_bound = c.destination_radius.as_f64();
    let mut dest = Slack::new();
    for (i, s) in samples.iter().enumerate() {
        for p in &s.d_all {
            let r = norm(p).as_f64();
            // strict inequality |x| < R
            let slack = if r < r_bound {
                r_bound - r
            } else {
                (r_bound - r).min(-f64::MIN_POSITIVE)
            };
            dest.observe(slack, || fmt_point(i, p));
        }
    }
    entries.push(dest.entry("destination_radius", "A2", 0.0));

    // transversality on ∂A and ∂C
    let two_xi0 = 2.0 * c.xi0.as_f64();
    for (name, kind_a) in [("transversality_a", true), ("transversality_c", false)] {
        let mut tr = Slack::new();
        for (i, s) in samples.iter().enumerate() {
            let id = ChartId(i);
            let chart = model.chart(id);
            let (region, pts) = if kind_a {
                (&chart.autonomous, &s.a_boundary)
            } else {
                (&chart.controlled, &s.c_boundary)
            };
            let Some(region) = region else { continue };
            for p in pts {
                let Ok(zeta) = region.normal_unchecked(p) else { continue };
                for &t in &times {
                    for u in &model.controls.u {
                        let f = model.dynamics(id, t, p, u);
                        let proj = dot(&f, &zeta).as_f64();
                        tr.observe(-two_xi0 - proj, || {
                            format!("{} with u = {:?}: f.n = {proj:.6}", fmt_point(i, p), u)
                        });
                    }
                }
            }
        }
        entries.push(tr.entry(name, "A5", tol));
    }

    // trajectories may leave the domain only through A
    let mut exit = Slack::new();
    for (i, s) in samples.iter().enumerate() {
        let id = ChartId(i);
        let chart = model.chart(id);
        for p in &s.domain_boundary {
            if model.sd_autonomous(id, p) <= model.boundary_tol {
                continue;
            }
            let Ok(n_out) = chart.domain.normal_unchecked(p) else {
                continue;
            };
            for &t in &times {
                for u in &model.controls.u {
                    let f = model.dynamics(id, t, p, u);
                    let out = dot(&f, &n_out).as_f64();
                    exit.observe(-out, || format!("{} flows outward ({out:.6})", fmt_point(i, p)));
                }
            }
        }
    }
    entries.push(exit.entry("exit_through_a", "A2", 1e-12));

    // dynamics bound and Lipschitz constant
    let f_bound = c.dynamics_bound.as_f64();
    let lip = c.lipschitz.as_f64();
    let mut bound = Slack::new();
    let mut lipschitz = Slack::new();
    for (i, s) in samples.iter().enumerate() {
        let id = ChartId(i);
        let chart = model.chart(id);
        for p in s.domain.iter().chain(&s.a_all).chain(&s.c_all) {
            let growth = match config.mode {
                AuditMode::Stationary => 1.0,
                AuditMode::FiniteHorizon { .. } => 1.0 + norm(p).as_f64(),
            };
            for &t in &times {
                for u in &model.controls.u {
                    let f = norm(&model.dynamics(id, t, p, u)).as_f64();
                    let b = f_bound * growth;
                    bound.observe(b * (1.0 + rel) - f, || format!("{}: |f| = {f:.6}", fmt_point(i, p)));
                }
            }
        }
        let scale = {
            let (lo, hi) = model.window(id, radius);
            distance(&lo, &hi).as_f64().max(1e-6)
        };
        for (k, p) in s.domain.iter().enumerate() {
            let dir: Vec<S> = random_direction(&mut rng, p.len());
            let step = if k % 2 == 0 {
                1e-4 * scale
            } else {
                uniform(&mut rng, 0.01, 0.5) * scale
            };
            let z: Vec<S> = p.iter().zip(&dir).map(|(&a, &d)| a + S::lit(step) * d).collect();
            if chart.domain.sd(&z) > model.boundary_tol {
                continue;
            }
            let dxz = distance(p, &z).as_f64();
            if dxz == 0.0 {
                continue;
            }
            for &t in &times {
                for u in &model.controls.u {
                    let fp = model.dynamics(id, t, p, u);
                    let fz = model.dynamics(id, t, &z, u);
                    let ratio = distance(&fp, &fz).as_f64() / dxz;
                    lipschitz.observe(lip * (1.0 + 1e-6) + 1e-12 - ratio, || {
                        format!("{}: ratio {ratio:.6}", fmt_point(i, p))
                    });
                }
            }
        }
    }
    entries.push(bound.entry("dynamics_bound", "A4", 0.0));
    entries.push(lipschitz.entry("dynamics_lipschitz", "A4", 0.0));

    // jump map lands in D (away from A), and is G-Lipschitz
    let g_lip = c.jump_lipschitz.as_f64();
    let mut into_d = Slack::new();
    let mut jump_lip = Slack::new();
    for (i, s) in samples.iter().enumerate() {
        let id = ChartId(i);
        for (vi, v) in model.controls.v.iter().enumerate() {
            let mut images: Vec<(&Vec<S>, HybridState<S>)> = Vec::new();
            for p in &s.a_all {
                match model.jump_map(id, p, v) {
                    Ok(target) => {
                        let sd = model.sd_destination(target.chart, &target.coords).as_f64();
                        let sd_dom = model.sd_domain(target.chart, &target.coords).as_f64();
                        into_d.observe(-sd.max(sd_dom), || {
                            format!(
                                "{} with v#{vi} lands at {}",
                                fmt_point(i, p),
                                fmt_point(target.chart.0, &target.coords)
                            )
                        });
                        images.push((p, target));
                    }
                    Err(e) => into_d.observe(f64::NEG_INFINITY, || format!("{}: {e}", fmt_point(i, p))),
                }
            }
            for w in images.windows(2) {
                let (p, gp) = &w[0];
                let (q, gq) = &w[1];
                if gp.chart != gq.chart {
                    continue;
                }
                let dpq = distance(p, q).as_f64();
                if dpq == 0.0 {
                    continue;
                }
                let ratio = distance(&gp.coords, &gq.coords).as_f64() / dpq;
                jump_lip.observe(g_lip * (1.0 + 1e-6) + 1e-12 - ratio, || {
                    format!("{}: ratio {ratio:.6}", fmt_point(i, p))
                });
            }
        }
    }
    entries.push(into_d.entry("jump_map_into_d", "A3", tol));
    entries.push(jump_lip.entry("jump_map_lipschitz", "A3", 0.0));

    // costs: K ≥ 0, C_a, C_c ≥ C′
    let floor = c.jump_cost_floor.as_f64();
    let mut running_nonneg = Slack::new();
    let mut jump_floor = Slack::new();
    let all_d: Vec<HybridState<S>> = samples
        .iter()
        .enumerate()
        .flat_map(|(j, s)| s.d_all.iter().map(move |p| HybridState::new(j, p.clone())))
        .collect();
    for (i, s) in samples.iter().enumerate() {
        let id = ChartId(i);
        for p in s.domain.iter().chain(&s.a_all).chain(&s.c_all) {
            for &t in &times {
                for u in &model.controls.u {
                    let k = model.running_cost(id, t, p, u).as_f64();
                    running_nonneg.observe(k, || format!("{}: K = {k}", fmt_point(i, p)));
                }
            }
        }
        for p in &s.a_all {
            for v in &model.controls.v {
                let ca = model.autonomous_cost(id, p, v).as_f64();
                jump_floor.observe(ca - floor, || format!("{}: C_a = {ca}", fmt_point(i, p)));
            }
        }
        for p in &s.c_all {
            for d in all_d.iter().step_by((all_d.len() / n).max(1)) {
                let cc = model.controlled_cost(id, p, d).as_f64();
                jump_floor.observe(cc - floor, || {
                    format!("{} to {}: C_c = {cc}", fmt_point(i, p), fmt_point(d.chart.0, &d.coords))
                });
            }
        }
    }
    if floor <= 0.0 {
        jump_floor.observe(floor.min(-f64::MIN_POSITIVE), || format!("C_prime = {floor}"));
    }
    entries.push(running_nonneg.entry("running_cost_nonnegative", "C1", 0.0));
    entries.push(jump_floor.entry("jump_cost_floor", "C2", 1e-12));

    // polynomial growth degree
    entries.push(growth_entry(
        model,
        &samples,
        &times,
        c.k.as_f64(),
        c.destination_radius.as_f64(),
    ));

    let mut growth_cond = Slack::new();
    if matches!(config.mode, AuditMode::Stationary) {
        let kl = (c.k * c.lipschitz).as_f64();
        let lam = c.lambda.as_f64();
        let slack = if lam > kl {
            lam - kl
        } else {
            (lam - kl).min(-f64::MIN_POSITIVE)
        };
        growth_cond.observe(slack, || format!("lambda = {lam}, kL = {kl}"));
    }
    entries.push(growth_cond.entry("discount_dominates_growth", "lambda > kL", 0.0));

    ValidationReport {
        seed: config.seed,
        samples: n,
        entries,
    }
}

/// Fits the log-log slope of the largest sampled `cost / (1 + |x|^k)` per
/// radial shell; a clearly positive slope refutes the declared degree.
fn growth_entry<S: Scalar>(
    model: &HybridModel<S>,
    samples: &[ChartSamples<S>],
    times: &[S],
    k: f64,
    r: f64,
) -> ValidationEntry {
    const SHELLS: usize = 8;
    let shell_of = |x: f64| -> usize {
        if x <= r {
            0
        } else {
            ((x / r).log2().ceil() as usize).min(SHELLS - 1)
        }
    };
    // per chart and family, per shell: (largest cost / (1 + |x|^k), largest |x| seen)
    let names = ["K", "C_a", "C_c"];
    let mut families = vec![[(f64::NAN, 0.0_f64); SHELLS]; samples.len() * names.len()];
    let mut bump = |slot: usize, x: f64, v: f64| {
        let ratio = v.abs() / (1.0 + x.powf(k));
        let cell = &mut families[slot][shell_of(x)];
        if cell.0.is_nan() || ratio > cell.0 {
            cell.0 = ratio;
        }
        cell.1 = cell.1.max(x);
    };
    let probe: Option<HybridState<S>> = samples
        .iter()
        .enumerate()
        .find_map(|(j, s)| s.d_all.first().map(|p| HybridState::new(j, p.clone())));
    for (i, s) in samples.iter().enumerate() {
        let id = ChartId(i);
        let base = i * names.len();
        for p in &s.domain {
            for &t in times {
                for u in &model.controls.u {
                    bump(base, norm(p).as_f64(), model.running_cost(id, t, p, u).as_f64());
                }
            }
        }
        for p in &s.a_all {
            for v in &model.controls.v {
                bump(base + 1, norm(p).as_f64(), model.autonomous_cost(id, p, v).as_f64());
            }
        }
        if let Some(d) = &probe {
            for p in &s.c_all {
                bump(base + 2, norm(p).as_f64(), model.controlled_cost(id, p, d).as_f64());
            }
        }
    }
    let mut slack = Slack::new();
    for (slot, shells) in families.iter().enumerate() {
        let name = format!("chart {} {}", slot / names.len(), names[slot % names.len()]);
        let pts: Vec<(f64, f64)> = shells
            .iter()
            .filter(|(v, x)| v.is_finite() && *x > 0.0)
            .map(|&(v, x)| (x, v))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        // the normalised cost must level off: compare the two outermost shells
        let (x0, v0) = pts[pts.len() - 2];
        let (x1, v1) = pts[pts.len() - 1];
        if x1 <= x0 * 1.05 {
            continue;
        }
        let slope = ((v1 + 1e-12) / (v0 + 1e-12)).ln() / (x1 / x0).ln();
        slack.observe(0.5 - slope, || {
            format!("{name}: normalised cost still grows like |x|^{slope:.3} beyond degree {k}")
        });
    }
    slack.entry("cost_growth_degree", "C1, C2", 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use serde_json::json;

    fn model(v: serde_json::Value) -> HybridModel<f64> {
        HybridModel::from_value(v).unwrap()
    }

    #[test]
    fn reference_models_pass_every_check() {
        for (name, m) in [
            ("conveyor", fixtures::conveyor::<f64>()),
            ("constant", fixtures::constant_cost()),
            ("attractor", fixtures::attractor()),
            ("two_chart", fixtures::two_chart()),
        ] {
            let report = validate_model(&m, 64);
            let failed: Vec<_> = report.failures().collect();
            assert!(failed.is_empty(), "{name}: {failed:#?}");
        }
    }

    #[test]
    fn reversed_flow_breaks_transversality() {
        let mut v = fixtures::conveyor_json();
        v["dynamics"] = json!(["-1"]);
        let report = validate_model(&model(v), 64);
        let tr = report.entry("transversality_a").unwrap();
        assert!(!tr.passed);
        assert!((tr.margin - (-1.5)).abs() < 1e-12, "margin {}", tr.margin);
        assert!(!report.all_passed());
    }

    #[test]
    fn far_destination_breaks_radius_bound() {
        let mut v = fixtures::conveyor_json();
        // a destination point at norm R + 1 = 2 (still away from A)
        v["charts"][0]["D"] = json!({"type": "union", "parts": [
            {"type": "ball", "center": [0.5], "radius": 0.25},
            {"type": "ball", "center": [2.0], "radius": 1e-3}
        ]});
        v["charts"][0]["A"] = json!({"type": "half_space", "normal": [-1.0], "offset": -2.9});
        v["charts"][0]["domain"] = json!({"type": "box", "lo": [0.0], "hi": [3.0]});
        let report = validate_model(&model(v), 64);
        assert!(!report.entry("destination_radius").unwrap().passed);
    }

    #[test]
    fn understated_constants_are_refuted() {
        let mut v = fixtures::conveyor_json();
        v["constants"]["F"] = json!(0.5);
        v["constants"]["beta"] = json!(2.0);
        v["constants"]["C_prime"] = json!(1.5);
        let report = validate_model(&model(v), 64);
        assert!(!report.entry("dynamics_bound").unwrap().passed);
        assert!(!report.entry("separation_a_d").unwrap().passed);
        assert!(!report.entry("jump_cost_floor").unwrap().passed);
        assert!(report.entry("transversality_a").unwrap().passed);
    }

    #[test]
    fn lipschitz_audit_catches_steep_fields() {
        let mut v = fixtures::constant_cost_json();
        v["dynamics"] = json!(["0.005 * sin(40 * x1)"]);
        v["constants"]["L"] = json!(0.1);
        let report = validate_model(&model(v), 128);
        let e = report.entry("dynamics_lipschitz").unwrap();
        assert!(!e.passed, "{e:?}");
    }

    #[test]
    fn growth_condition_requires_lambda_above_kl() {
        let mut v = fixtures::attractor_json();
        v["constants"]["lambda"] = json!(1.5);
        let report = validate_model(&model(v), 32);
        assert!(!report.entry("discount_dominates_growth").unwrap().passed);
        let mut v = fixtures::attractor_json();
        v["constants"]["k"] = json!(0.5);
        let report = validate_model(&model(v), 32);
        assert!(!report.entry("cost_growth_degree").unwrap().passed);
    }

    #[test]
    fn jump_map_outside_destination_fails() {
        let mut v = fixtures::conveyor_json();
        v["jump_map"] = json!({"target": 0, "coords": ["1.5"]});
        let report = validate_model(&model(v), 32);
        assert!(!report.entry("jump_map_into_d").unwrap().passed);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let m = fixtures::attractor::<f64>();
        let cfg = ValidationConfig {
            samples: 40,
            seed: 11,
            ..Default::default()
        };
        let a = validate_model_with(&m, &cfg);
        let b = validate_model_with(&m, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn finite_horizon_mode_uses_linear_growth() {
        let mut v = fixtures::constant_cost_json();
        v["dynamics"] = json!(["0.01 * x1"]);
        v["constants"]["F"] = json!(0.006);
        let m = model(v);
        let stationary = validate_model(&m, 64);
        assert!(!stationary.entry("dynamics_bound").unwrap().passed);
        let finite = validate_model_with(
            &m,
            &ValidationConfig {
                mode: AuditMode::FiniteHorizon { horizon: 1.0 },
                ..Default::default()
            },
        );
        assert!(finite.entry("dynamics_bound").unwrap().passed);
    }
}
