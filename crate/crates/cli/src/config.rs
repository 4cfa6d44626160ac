//! Run configuration: JSON config file merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use qres::freesets::{FreeSetSpec, NoiseSet};
use qres::sdp::SolverOptions;
use qres::DensityMatrix;
use serde::{Deserialize, Serialize};

use crate::objects::{inline_or_file, load_free_set, parse_json, parse_levels};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseArg {
    All,
    Free,
}

impl From<NoiseArg> for NoiseSet {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::All => NoiseSet::All,
            NoiseArg::Free => NoiseSet::Free,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    Robustness,
    Weight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TupleMode {
    #[default]
    Robustness,
    Weight,
    Membership,
}

/// Levels as `"a..b"` or an explicit list.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum LevelsJson {
    Range(String),
    List(Vec<usize>),
}

/// Contents of a `--config` file. Every field is optional; flags win.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub free_set: Option<FreeSetSpec>,
    pub noise: Option<NoiseArg>,
    pub tol_gap: Option<f64>,
    pub tol_feas: Option<f64>,
    pub max_iters: Option<usize>,
    pub levels: Option<LevelsJson>,
    pub anchor: Option<DensityMatrix>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub emit_witness: Option<bool>,
    pub measure: Option<Measure>,
    pub mode: Option<TupleMode>,
    pub faithful: Option<bool>,
}

impl RunConfig {
    /// Reads a config file; relative input and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg: RunConfig = parse_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.inputs.iter_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(o) = cfg.out.as_mut() {
            if o.is_relative() {
                *o = base.join(&*o);
            }
        }
        if let Some(f) = &cfg.free_set {
            f.validate().context("invalid free set in config")?;
        }
        Ok(cfg)
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// Object files (`{"state": ...}`, `{"channel": ...}`, `{"tuple": [...]}`, ...).
    pub inputs: Vec<PathBuf>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Free-set spec as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub free_set: Option<String>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Truncation levels, `a..b` or `a,b,c`.
    #[arg(long)]
    pub levels: Option<String>,
    /// Anchor state for truncations, inline JSON or a path.
    #[arg(long)]
    pub anchor: Option<String>,
    #[arg(long)]
    pub tol_gap: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Include witnesses and optimal points in the report.
    #[arg(long)]
    pub emit_witness: bool,
}

/// Fully resolved settings of one run.
#[derive(Clone, Debug)]
pub struct Settings {
    pub inputs: Vec<PathBuf>,
    pub free_set: Option<FreeSetSpec>,
    pub noise: NoiseSet,
    pub levels: Option<Vec<usize>>,
    pub anchor: Option<DensityMatrix>,
    pub solver: SolverOptions,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub jobs: usize,
    pub emit_witness: bool,
    pub measure: Measure,
    pub mode: TupleMode,
    pub faithful: bool,
}

impl Settings {
    pub fn resolve(
        common: &CommonArgs,
        measure: Option<Measure>,
        mode: Option<TupleMode>,
        faithful: bool,
        preloaded: Option<RunConfig>,
    ) -> Result<Self> {
        let cfg = match (preloaded, &common.config) {
            (Some(c), _) => c,
            (None, Some(p)) => RunConfig::load(p)?,
            (None, None) => RunConfig::default(),
        };
        let free_set = match &common.free_set {
            Some(s) => Some(load_free_set(s)?),
            None => cfg.free_set,
        };
        let levels = match (&common.levels, cfg.levels) {
            (Some(s), _) => Some(parse_levels(s)?),
            (None, Some(LevelsJson::Range(s))) => Some(parse_levels(&s)?),
            (None, Some(LevelsJson::List(l))) => Some(l),
            (None, None) => None,
        };
        let anchor = match &common.anchor {
            Some(s) => Some(inline_or_file::<DensityMatrix>(s, "anchor")?),
            None => cfg.anchor,
        };
        let mut solver = SolverOptions { record_history: false, ..SolverOptions::default() };
        if let Some(g) = common.tol_gap.or(cfg.tol_gap) {
            if !(g > 0.0) {
                bail!("--tol-gap must be positive");
            }
            solver.gap_tol = g;
        }
        if let Some(t) = cfg.tol_feas {
            if !(t > 0.0) {
                bail!("tol_feas must be positive");
            }
            solver.feas_tol = t;
        }
        if let Some(m) = common.max_iters.or(cfg.max_iters) {
            if m == 0 {
                bail!("--max-iters must be positive");
            }
            solver.max_iterations = m;
        }
        let jobs = common.jobs.or(cfg.jobs).unwrap_or(1);
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        Ok(Self {
            inputs: if common.inputs.is_empty() { cfg.inputs } else { common.inputs.clone() },
            free_set,
            noise: common.noise.or(cfg.noise).map_or(NoiseSet::All, NoiseSet::from),
            levels,
            anchor,
            solver,
            out: common.out.clone().or(cfg.out),
            format: common.format.or(cfg.format).unwrap_or_default(),
            jobs,
            emit_witness: common.emit_witness || cfg.emit_witness.unwrap_or(false),
            measure: measure.or(cfg.measure).unwrap_or_default(),
            mode: mode.or(cfg.mode).unwrap_or_default(),
            faithful: faithful || cfg.faithful.unwrap_or(false),
        })
    }

    pub fn require_free_set(&self) -> Result<&FreeSetSpec> {
        self.free_set.as_ref().context("a free set is required (--free-set)")
    }
}
