use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::Failure;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model description (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// JSON file with default settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stopping tolerance of the stationary iteration.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Time step (solver step, or integration step for `simulate`).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Grid spacing.
    #[arg(long = "grid-h")]
    pub grid_h: Option<f64>,
    /// Truncation radius for unbounded domains.
    #[arg(long = "trunc-radius")]
    pub trunc_radius: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Run even if the assumption audit fails.
    #[arg(long)]
    pub force: bool,
}

/// Every tunable value; missing entries fall back to defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub dt: Option<f64>,
    pub grid_h: Option<f64>,
    pub trunc_radius: Option<f64>,
    pub max_iter: Option<usize>,
    pub force: Option<bool>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub slices: Option<usize>,
    pub samples: Option<usize>,
    pub trials: Option<usize>,
    pub margin: Option<f64>,
    pub levels: Option<usize>,
    pub min_order: Option<f64>,
    pub tail_tol: Option<f64>,
    pub start: Option<f64>,
    pub max_jumps: Option<usize>,
}

macro_rules! merge_fields {
    ($flags:expr, $config:expr, $sources:expr, $($f:ident),*) => {{
        let mut out = Settings::default();
        $(
            if $flags.$f.is_some() {
                out.$f = $flags.$f.clone();
                $sources.insert(stringify!($f), "flag");
            } else if $config.$f.is_some() {
                out.$f = $config.$f.clone();
                $sources.insert(stringify!($f), "config");
            }
        )*
        out
    }};
}

/// Settings after merging flags over the config file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub values: Settings,
    pub sources: BTreeMap<&'static str, &'static str>,
}

impl Resolved {
    pub fn seed(&self) -> u64 {
        self.values.seed.unwrap_or(0)
    }

    pub fn force(&self) -> bool {
        self.values.force.unwrap_or(false)
    }

    fn describe(&self) -> Value {
        let all = serde_json::to_value(&self.values).unwrap_or(Value::Null);
        let mut map = serde_json::Map::new();
        if let Value::Object(fields) = all {
            for (k, v) in fields {
                let source = self.sources.get(k.as_str()).copied().unwrap_or("default");
                map.insert(k, json!({"value": v, "source": source}));
            }
        }
        Value::Object(map)
    }
}

pub fn resolve(common: &Common, mut flags: Settings) -> Result<Resolved> {
    flags.seed = common.seed;
    flags.tol = common.tol;
    flags.dt = common.dt;
    flags.grid_h = common.grid_h;
    flags.trunc_radius = common.trunc_radius;
    flags.max_iter = common.max_iter;
    flags.force = common.force.then_some(true);
    let config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(Failure::input)?;
            serde_json::from_str::<Settings>(&text)
                .with_context(|| format!("parsing config {}", path.display()))
                .map_err(Failure::input)?
        }
        None => Settings::default(),
    };
    let mut sources = BTreeMap::new();
    let values = merge_fields!(
        flags,
        config,
        sources,
        seed,
        tol,
        dt,
        grid_h,
        trunc_radius,
        max_iter,
        force,
        horizon,
        steps,
        slices,
        samples,
        trials,
        margin,
        levels,
        min_order,
        tail_tol,
        start,
        max_jumps
    );
    Ok(Resolved { values, sources })
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub model_path: PathBuf,
    pub config_path: Option<PathBuf>,
    pub settings: Value,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub tool_version: String,
    pub threads: usize,
    pub arguments: Vec<String>,
}

/// Creates the output directory and writes `manifest.json` into it.
pub fn start_run(subcommand: &str, common: &Common, resolved: &Resolved) -> Result<()> {
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))
        .map_err(Failure::input)?;
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        model_path: common.model.clone(),
        config_path: common.config.clone(),
        settings: resolved.describe(),
        output_dir: common.out.clone(),
        seed: resolved.seed(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        arguments: std::env::args().collect(),
    };
    write_json(&common.out, "manifest.json", &manifest)
}

pub fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}
