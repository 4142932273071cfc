use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use hybridqvi::expr::{Env, Expr};
use hybridqvi::finite::{
    solve_finite as run_finite, terminal_consistency_check, FiniteConfig, MarchConfig, TerminalStep,
};
use hybridqvi::grid::{fmt17, TimeStamp};
use hybridqvi::stationary::{iterate, Discretization, SolverConfig};
use hybridqvi::trajectory::{
    simulate as run_simulation, ExplicitStrategy, Horizon, PolicyStrategy, SimConfig, Strategy,
};
use hybridqvi::validate::{validate_model_with, AuditMode, ValidationConfig, ValidationReport};
use hybridqvi::verification::{
    reference_solution, refinement_levels, run_assumption_audit, run_comparison_shadow, run_convergence,
    run_finite_properties, run_ode_estimates, run_operator_properties, run_solver_properties, OdeConfig,
    OperatorConfig, PropertyCheck, PropertyReport, ShadowConfig, SolverCheckConfig,
};
use hybridqvi::{ChartId, GridSpec, HybridState, ModelF64, Policy, ValueField};

use crate::settings::{create, resolve, start_run, write_json, Common, Resolved, Settings};
use crate::Failure;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sample points per check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Audit for a finite horizon `T` (linear growth bounds) instead.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StationaryArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct FiniteArgs {
    #[command(flatten)]
    pub common: Common,
    /// Horizon `T`.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Number of time steps (overrides `--dt`).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Number of slices to write, evenly spaced; all by default.
    #[arg(long)]
    pub slices: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial coordinates, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long, default_value_t = 0)]
    pub chart: usize,
    /// Output directory of `solve-stationary` or `solve-finite`.
    #[arg(long, conflicts_with = "controls")]
    pub policy: Option<PathBuf>,
    /// Explicit open-loop controls (JSON).
    #[arg(long)]
    pub controls: Option<PathBuf>,
    /// Finite horizon end time; discounted infinite horizon if absent.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Start time for finite horizons.
    #[arg(long)]
    pub start: Option<f64>,
    /// Tail-bound tolerance for infinite horizons.
    #[arg(long = "tail-tol")]
    pub tail_tol: Option<f64>,
    #[arg(long = "max-jumps")]
    pub max_jumps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Random trials per property.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Horizon used by the finite-horizon suite.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Offset used for the comparison shadow.
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of refinement levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Exact value as an expression in `x1, x2, ...` (and `chart`);
    /// a solve on a 4x finer grid is used if absent.
    #[arg(long)]
    pub oracle: Option<String>,
    /// Smallest acceptable fitted order.
    #[arg(long = "min-order")]
    pub min_order: Option<f64>,
}

fn load_model(path: &Path) -> Result<ModelF64> {
    ModelF64::load(path)
        .with_context(|| format!("loading model {}", path.display()))
        .map_err(Failure::input)
}

fn default_h(model: &ModelF64, trunc_radius: Option<f64>) -> f64 {
    let radius = trunc_radius.unwrap_or_else(|| model.default_trunc_radius());
    let extent = (0..model.chart_count())
        .map(|i| {
            let (lo, hi) = model.window(ChartId(i), radius);
            lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    if extent > 0.0 {
        extent / 60.0
    } else {
        1.0
    }
}

fn grid_spec(model: &ModelF64, r: &Resolved) -> Result<GridSpec<f64>> {
    let h = r
        .values
        .grid_h
        .unwrap_or_else(|| default_h(model, r.values.trunc_radius));
    if h.is_nan() || h <= 0.0 {
        return Err(Failure::input(anyhow!("--grid-h must be positive, got {h}")));
    }
    Ok(GridSpec {
        h,
        trunc_radius: r.values.trunc_radius,
    })
}

fn solver_config(r: &Resolved) -> SolverConfig<f64> {
    SolverConfig {
        dt: r.values.dt,
        tol: r.values.tol.unwrap_or(1e-6),
        max_iter: r.values.max_iter.unwrap_or(100_000),
        validate: false,
    }
}

fn print_report(report: &ValidationReport) {
    for e in &report.entries {
        println!(
            "{:<28} {:<4} margin {:>12.4e}{}",
            e.name,
            if e.passed { "ok" } else { "FAIL" },
            e.margin,
            e.witness.as_deref().map(|w| format!("  [{w}]")).unwrap_or_default()
        );
    }
}

/// Runs the audit, writes `validation.json` and refuses failing models
/// unless forced.
fn audit(model: &ModelF64, r: &Resolved, mode: AuditMode, out: &Path) -> Result<()> {
    let cfg = ValidationConfig {
        samples: r.values.samples.unwrap_or(64),
        seed: r.seed(),
        mode,
        trunc_radius: r.values.trunc_radius,
    };
    let report = validate_model_with(model, &cfg);
    write_json(out, "validation.json", &report)?;
    if report.all_passed() {
        return Ok(());
    }
    let names: Vec<&str> = report.failures().map(|e| e.name.as_str()).collect();
    if r.force() {
        eprintln!(
            "warning: audit failed ({}); continuing because of --force",
            names.join(", ")
        );
        Ok(())
    } else {
        Err(Failure::check(format!(
            "model failed the assumption audit: {}; pass --force to solve anyway",
            names.join(", ")
        )))
    }
}

pub fn validate(a: &ValidateArgs) -> Result<()> {
    let flags = Settings {
        samples: a.samples,
        horizon: a.horizon,
        ..Settings::default()
    };
    let r = resolve(&a.common, flags)?;
    start_run("validate", &a.common, &r)?;
    let model = load_model(&a.common.model)?;
    let cfg = ValidationConfig {
        samples: r.values.samples.unwrap_or(64),
        seed: r.seed(),
        mode: match r.values.horizon {
            Some(horizon) => AuditMode::FiniteHorizon { horizon },
            None => AuditMode::Stationary,
        },
        trunc_radius: r.values.trunc_radius,
    };
    let report = validate_model_with(&model, &cfg);
    write_json(&a.common.out, "validation.json", &report)?;
    print_report(&report);
    if report.all_passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|e| e.name.as_str()).collect();
        Err(Failure::check(format!("failing checks: {}", names.join(", "))))
    }
}

pub fn solve_stationary(a: &StationaryArgs) -> Result<()> {
    let r = resolve(&a.common, Settings::default())?;
    start_run("solve-stationary", &a.common, &r)?;
    let out = &a.common.out;
    let model = load_model(&a.common.model)?;
    audit(&model, &r, AuditMode::Stationary, out)?;
    let spec = grid_spec(&model, &r)?;
    let config = solver_config(&r);
    let disc = Discretization::build(&model, &spec, config.dt)?;
    let (v, policy, diag) = iterate(&model, &disc, &config)?;
    v.write_csv(create(out, "value.csv")?)?;
    v.write_binary(create(out, "value.bin")?)?;
    policy.write_csv(create(out, "policy.csv")?)?;
    let mut w = create(out, "diagnostics.json")?;
    diag.write_json(&mut w)?;
    w.flush()?;
    println!(
        "nodes {}  h {:.4e}  dt {:.4e}  iterations {}  residual {:.3e}  converged {}",
        diag.nodes,
        diag.h,
        diag.dt,
        diag.iterations,
        diag.residual.max(),
        diag.converged
    );
    if diag.converged {
        Ok(())
    } else {
        Err(Failure::numerical(format!(
            "no convergence after {} iterations (last change {:.3e})",
            diag.iterations,
            diag.residual_history.last().copied().unwrap_or(f64::NAN)
        )))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SliceEntry {
    index: usize,
    time: f64,
    value_csv: String,
    value_bin: String,
    policy_csv: Option<String>,
    residual: f64,
    sub_iterations: usize,
    jumps: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FiniteIndex {
    horizon: f64,
    steps: usize,
    dt: f64,
    h: f64,
    /// Every slice and policy was written.
    complete: bool,
    slices: Vec<SliceEntry>,
    terminal: serde_json::Value,
    terminal_consistency: Vec<(f64, f64)>,
}

fn chosen_slices(steps: usize, wanted: Option<usize>) -> Vec<usize> {
    match wanted {
        Some(k) if k < steps + 1 => {
            let k = k.max(2);
            let mut idx: Vec<usize> = (0..k)
                .map(|i| ((i as f64) * steps as f64 / (k - 1) as f64).round() as usize)
                .collect();
            idx.dedup();
            idx
        }
        _ => (0..=steps).collect(),
    }
}

pub fn solve_finite(a: &FiniteArgs) -> Result<()> {
    let flags = Settings {
        horizon: a.horizon,
        steps: a.steps,
        slices: a.slices,
        ..Settings::default()
    };
    let r = resolve(&a.common, flags)?;
    start_run("solve-finite", &a.common, &r)?;
    let out = &a.common.out;
    let horizon = r
        .values
        .horizon
        .ok_or_else(|| Failure::input(anyhow!("a horizon is required (--horizon)")))?;
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Failure::input(anyhow!("the horizon must be positive, got {horizon}")));
    }
    let model = load_model(&a.common.model)?;
    audit(&model, &r, AuditMode::FiniteHorizon { horizon }, out)?;
    let spec = grid_spec(&model, &r)?;
    let steps = r
        .values
        .steps
        .or_else(|| r.values.dt.map(|dt| (horizon / dt).ceil().max(1.0) as usize));
    let config = FiniteConfig {
        horizon,
        steps,
        march: MarchConfig::default(),
        triangle_samples: 24,
        validate: false,
    };
    let (terminal, sol) = run_finite(&model, &spec, &config)?;
    let tg = sol.time_grid;
    let chosen = chosen_slices(tg.steps, r.values.slices);
    let mut entries = Vec::with_capacity(chosen.len());
    for &n in &chosen {
        let value_csv = format!("slice_{n:05}.csv");
        let value_bin = format!("slice_{n:05}.bin");
        sol.slices[n].write_csv(create(out, &value_csv)?)?;
        sol.slices[n].write_binary(create(out, &value_bin)?)?;
        let policy_csv = if n < tg.steps {
            let name = format!("policy_{n:05}.csv");
            sol.policies[n].write_csv(create(out, &name)?)?;
            Some(name)
        } else {
            None
        };
        let (residual, sub_iterations, jumps) = match sol.stats.get(n) {
            Some(s) => (s.residual, s.sub_iterations, s.jumps),
            None => (terminal.residual.max(), 0, 0),
        };
        entries.push(SliceEntry {
            index: n,
            time: tg.time(n),
            value_csv,
            value_bin,
            policy_csv,
            residual,
            sub_iterations,
            jumps,
        });
    }
    terminal.field.write_csv(create(out, "terminal.csv")?)?;
    let count = |f: fn(&TerminalStep) -> bool| terminal.log.iter().filter(|s| f(s)).count();
    let radius = spec.trunc_radius.unwrap_or_else(|| model.default_trunc_radius());
    let index = FiniteIndex {
        horizon,
        steps: tg.steps,
        dt: tg.dt,
        h: sol.slices[0].grid.max_spacing(),
        complete: chosen.len() == tg.steps + 1,
        slices: entries,
        terminal: json!({
            "file": "terminal.csv",
            "residual": terminal.residual,
            "triangle": terminal.triangle,
            "copied_nodes": count(|s| matches!(s, TerminalStep::Copied)),
            "controlled_jumps": count(|s| matches!(s, TerminalStep::Controlled { jumped: true })),
            "controlled_declines": count(|s| matches!(s, TerminalStep::Controlled { jumped: false })),
            "autonomous_nodes": count(|s| matches!(s, TerminalStep::Autonomous)),
        }),
        terminal_consistency: terminal_consistency_check(&sol, &terminal.field, radius, 5),
    };
    write_json(out, "index.json", &index)?;
    let worst = sol.stats.iter().map(|s| s.residual).fold(0.0, f64::max);
    println!(
        "steps {}  dt {:.4e}  slices written {}  worst slice residual {:.3e}  terminal residual {:.3e}",
        tg.steps,
        tg.dt,
        chosen.len(),
        worst,
        terminal.residual.max()
    );
    Ok(())
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::input(anyhow!("`{s}` is not a number in --x0")))
        })
        .collect()
}

enum Loaded {
    Stationary(Policy<f64>, ValueField<f64>),
    Finite(Vec<Policy<f64>>, f64, f64),
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::input)?;
    Ok(BufReader::new(f))
}

fn load_policy(model: &ModelF64, dir: &Path) -> Result<Loaded> {
    let index_path = dir.join("index.json");
    if index_path.exists() {
        let index: FiniteIndex = serde_json::from_reader(open(&index_path)?)
            .with_context(|| format!("parsing {}", index_path.display()))
            .map_err(Failure::input)?;
        if !index.complete {
            return Err(Failure::input(anyhow!(
                "{} holds only some slices; rerun solve-finite without --slices",
                dir.display()
            )));
        }
        let first = index
            .slices
            .first()
            .ok_or_else(|| Failure::input(anyhow!("empty slice index")))?;
        let grid = ValueField::<f64>::read_binary(open(&dir.join(&first.value_bin))?)?.grid;
        let mut policies = Vec::with_capacity(index.steps);
        for e in &index.slices {
            if let Some(p) = &e.policy_csv {
                policies.push(Policy::read_csv(
                    grid.clone(),
                    model.controls.u.clone(),
                    TimeStamp::Slice(e.time),
                    open(&dir.join(p))?,
                )?);
            }
        }
        Ok(Loaded::Finite(policies, index.horizon, index.dt))
    } else {
        let value = ValueField::<f64>::read_binary(open(&dir.join("value.bin"))?)?;
        let policy = Policy::read_csv(
            value.grid.clone(),
            model.controls.u.clone(),
            TimeStamp::Stationary,
            open(&dir.join("policy.csv"))?,
        )?;
        Ok(Loaded::Stationary(policy, value))
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let flags = Settings {
        horizon: a.horizon,
        start: a.start,
        tail_tol: a.tail_tol,
        max_jumps: a.max_jumps,
        ..Settings::default()
    };
    let r = resolve(&a.common, flags)?;
    start_run("simulate", &a.common, &r)?;
    let out = &a.common.out;
    let model = load_model(&a.common.model)?;
    if a.chart >= model.chart_count() {
        return Err(Failure::input(anyhow!("chart {} does not exist", a.chart)));
    }
    let x0 = HybridState::new(a.chart, parse_point(&a.x0)?);
    model.check_state(&x0).map_err(|e| Failure::input(e.into()))?;

    let loaded = a.policy.as_deref().map(|d| load_policy(&model, d)).transpose()?;
    let mut explicit = match &a.controls {
        Some(path) => serde_json::from_reader::<_, ExplicitStrategy<f64>>(open(path)?)
            .with_context(|| format!("parsing controls {}", path.display()))
            .map_err(Failure::input)?,
        None => ExplicitStrategy::default(),
    };
    explicit.bind(&model);
    let start = r.values.start.unwrap_or(0.0);
    let stationary_horizon = Horizon::Stationary {
        tail_tol: r.values.tail_tol.unwrap_or(1e-6),
    };
    let mut value_at_start = None;
    let (mut strategy, horizon): (Box<dyn Strategy<f64> + '_>, Horizon<f64>) = match &loaded {
        Some(Loaded::Stationary(policy, value)) => {
            value_at_start = Some(value.interpolate(&x0));
            let horizon = match r.values.horizon {
                Some(end) => Horizon::Finite { start, end },
                None => stationary_horizon,
            };
            (Box::new(PolicyStrategy::stationary(policy)), horizon)
        }
        Some(Loaded::Finite(policies, end, dt)) => {
            if let Some(h) = r.values.horizon {
                if (h - end).abs() > 1e-12 {
                    return Err(Failure::input(anyhow!("policy horizon is {end}, not {h}")));
                }
            }
            let refs: Vec<&Policy<f64>> = policies.iter().collect();
            (
                Box::new(PolicyStrategy::time_sliced(refs, 0.0, *dt)),
                Horizon::Finite { start, end: *end },
            )
        }
        None => {
            let horizon = match r.values.horizon {
                Some(end) => Horizon::Finite { start, end },
                None => stationary_horizon,
            };
            (Box::new(explicit), horizon)
        }
    };
    let config = SimConfig {
        step: r.values.dt,
        max_jumps: r.values.max_jumps.unwrap_or(10_000),
    };
    let rec = run_simulation(&model, &x0, strategy.as_mut(), horizon, &config)?;
    rec.write_jsonl(create(out, "trajectory.jsonl")?)?;
    rec.write_summary_csv(create(out, "summary.csv")?)?;
    let totals = json!({
        "running_cost_integral": rec.running_cost_integral,
        "terminal_cost": rec.terminal_cost,
        "total_cost": rec.total_cost,
        "ledger_total": rec.ledger_total(),
        "events": rec.events.len(),
        "end_time": rec.end_time(),
        "min_event_gap": rec.min_event_gap(),
        "truncation_bound": rec.truncation_bound,
        "f_hat": rec.f_hat,
        "value_at_start": value_at_start,
    });
    write_json(out, "totals.json", &totals)?;
    println!(
        "total cost {}  events {}  end time {:.6}",
        fmt17(rec.total_cost),
        rec.events.len(),
        rec.end_time()
    );
    Ok(())
}

/// Runs a suite; a numerical or model failure becomes a failed check.
fn suite(name: &str, run: impl FnOnce() -> hybridqvi::Result<PropertyReport>) -> Result<PropertyReport> {
    match run() {
        Ok(r) => Ok(r),
        Err(
            e @ (hybridqvi::Error::Io(_)
            | hybridqvi::Error::Json(_)
            | hybridqvi::Error::InvalidGrid(_)
            | hybridqvi::Error::Expression { .. }
            | hybridqvi::Error::InvalidModel(_)),
        ) => Err(Failure::input(e.into())),
        Err(e) => Ok(PropertyReport {
            suite: name.to_string(),
            seed: 0,
            checks: vec![PropertyCheck::flag(
                "suite_completed",
                false,
                f64::NEG_INFINITY,
                Some(e.to_string()),
            )],
        }),
    }
}

pub fn verify(a: &VerifyArgs) -> Result<()> {
    let flags = Settings {
        trials: a.trials,
        horizon: a.horizon,
        margin: a.margin,
        ..Settings::default()
    };
    let r = resolve(&a.common, flags)?;
    start_run("verify", &a.common, &r)?;
    let model = load_model(&a.common.model)?;
    let seed = r.seed();
    let trials = r.values.trials.unwrap_or(20);
    let spec = grid_spec(&model, &r)?;
    let solver = solver_config(&r);
    let horizon = r.values.horizon.unwrap_or(1.0);

    let mut reports = vec![run_assumption_audit(&model, r.values.samples.unwrap_or(64), seed)];
    reports.push(suite("operators", || {
        run_operator_properties(
            &model,
            &OperatorConfig {
                trials,
                seed,
                grid: spec,
                dt: solver.dt,
            },
        )
    })?);
    reports.push(suite("ode", || {
        run_ode_estimates(&model, &OdeConfig::new(trials, seed))
    })?);
    reports.push(suite("stationary", || {
        run_solver_properties(
            &model,
            &SolverCheckConfig {
                grid: spec,
                solver,
                seed,
                starts: 10,
            },
        )
    })?);
    reports.push(suite("finite", || {
        let mut cfg = FiniteConfig::new(horizon);
        cfg.validate = false;
        cfg.steps = r.values.steps;
        run_finite_properties(&model, &spec, &cfg)
    })?);
    reports.push(suite("comparison", || {
        run_comparison_shadow(
            &model,
            &ShadowConfig {
                grid: spec,
                solver,
                margin: r.values.margin.unwrap_or(0.1),
                sweeps: 100,
            },
        )
    })?);
    write_json(&a.common.out, "verification.json", &reports)?;
    let mut table = String::new();
    for rep in &reports {
        table.push_str(&rep.table());
    }
    print!("{table}");
    fs::write(a.common.out.join("verification.txt"), &table)?;
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|rep| {
            rep.checks
                .iter()
                .filter(|c| !c.passed)
                .map(move |c| format!("{}/{}", rep.suite, c.name))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::check(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn convergence(a: &ConvergenceArgs) -> Result<()> {
    let flags = Settings {
        levels: a.levels,
        min_order: a.min_order,
        ..Settings::default()
    };
    let r = resolve(&a.common, flags)?;
    start_run("convergence", &a.common, &r)?;
    let out = &a.common.out;
    let model = load_model(&a.common.model)?;
    let oracle_expr = a
        .oracle
        .as_deref()
        .map(Expr::parse)
        .transpose()
        .map_err(|e| Failure::input(e.into()))?;
    let count = r.values.levels.unwrap_or(4);
    if count < 2 {
        return Err(Failure::input(anyhow!("at least two levels are needed")));
    }
    let h0 = r
        .values
        .grid_h
        .unwrap_or_else(|| default_h(&model, r.values.trunc_radius) * 2.0);
    let dt0 = r.values.dt.unwrap_or(h0 / (2.0 * model.constants.dynamics_bound));
    let levels = refinement_levels(h0, dt0, count);
    let solver = solver_config(&r);
    let study = match oracle_expr {
        Some(expr) => {
            let oracle = |s: &HybridState<f64>| expr.eval(&Env::new(&s.coords).on_chart(s.chart.0));
            run_convergence(&model, &oracle, &levels, r.values.trunc_radius, &solver)?
        }
        None => {
            let (hf, dtf) = *levels.last().expect("at least two levels");
            let reference = reference_solution(&model, hf / 4.0, dtf / 4.0, r.values.trunc_radius, &solver)?;
            let oracle = |s: &HybridState<f64>| reference.interpolate(s);
            run_convergence(&model, &oracle, &levels, r.values.trunc_radius, &solver)?
        }
    };
    write_json(out, "convergence.json", &study)?;
    let mut w = create(out, "convergence.csv")?;
    writeln!(w, "h,dt,error")?;
    for ((h, dt), e) in study.levels.iter().zip(&study.errors) {
        writeln!(w, "{},{},{}", fmt17(*h), fmt17(*dt), fmt17(*e))?;
        println!("h {h:.4e}  dt {dt:.4e}  error {e:.4e}");
    }
    w.flush()?;
    let min_order = r.values.min_order.unwrap_or(0.8);
    println!("empirical order {:.4}", study.empirical_order);
    if study.empirical_order >= min_order {
        Ok(())
    } else {
        Err(Failure::numerical(format!(
            "empirical order {:.4} is below {min_order}",
            study.empirical_order
        )))
    }
}
