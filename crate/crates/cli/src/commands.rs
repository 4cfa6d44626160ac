//! Subcommand implementations. Each returns a JSON report and an outcome.

use anyhow::{bail, Context, Result};
use qres::approx::{approximate_quantifier, mode_layout, QuantifierKind, SweepOptions, TruncationPlan};
use qres::freesets::{depolarizing_compatibility_threshold, FreeSetSpec};
use qres::games::{verify_advantage, verify_weight_advantage};
use qres::measures::{robustness_with, weight_with, RobustnessResult, WeightResult};
use qres::sdp::SolveStatus;
use qres::ChoiChannel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use crate::config::{Measure, Settings, TupleMode};
use crate::objects::load_objects;

/// Seed of the sampler used when checking games on the noise set.
const GAME_SEED: u64 = 0x5eed;

/// How a command ended, mapped to the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Infinite value or infeasible problem.
    Infinite,
    /// A checked property failed.
    Violation,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::Infinite => 2,
            Outcome::Violation => 3,
        }
    }
}

pub struct Report {
    pub body: Value,
    /// Pre-rendered CSV, used instead of the generic flattening.
    pub csv: Option<String>,
    pub outcome: Outcome,
}

fn solver_ok(status: SolveStatus, what: &str) -> Result<()> {
    match status {
        SolveStatus::Optimal | SolveStatus::Infeasible => Ok(()),
        s => bail!("{what}: solver stopped with status {s:?}"),
    }
}

fn insert(map: &mut Map<String, Value>, key: &str, v: impl serde::Serialize) {
    map.insert(key.to_owned(), serde_json::to_value(v).expect("report fields serialise"));
}

fn robustness_fields(r: &RobustnessResult, f: &FreeSetSpec, emit: bool) -> Map<String, Value> {
    let mut m = Map::new();
    insert(&mut m, "free_set", f.name());
    insert(&mut m, "exactness", r.exactness);
    insert(&mut m, "noise", r.noise);
    insert(&mut m, "value", r.value);
    insert(&mut m, "infinite", r.value.is_infinite());
    insert(&mut m, "status", r.status);
    insert(&mut m, "primal_value", r.primal_value);
    insert(&mut m, "dual_value", r.dual_value);
    insert(&mut m, "gap", r.gap);
    insert(&mut m, "iterations", r.iterations);
    insert(&mut m, "slater", &r.slater);
    if emit {
        insert(&mut m, "witness", &r.witness);
        insert(&mut m, "free_point", &r.free_point);
        insert(&mut m, "noise_point", &r.noise_point);
    }
    m
}

fn weight_fields(w: &WeightResult, f: &FreeSetSpec, emit: bool) -> Map<String, Value> {
    let mut m = Map::new();
    insert(&mut m, "free_set", f.name());
    insert(&mut m, "exactness", w.exactness);
    insert(&mut m, "value", w.value);
    insert(&mut m, "status", w.status);
    insert(&mut m, "primal_value", w.primal_value);
    insert(&mut m, "dual_value", w.dual_value);
    insert(&mut m, "gap", w.gap);
    insert(&mut m, "iterations", w.iterations);
    insert(&mut m, "slater", &w.slater);
    if emit {
        insert(&mut m, "witness", &w.witness);
        insert(&mut m, "free_point", &w.free_point);
        insert(&mut m, "residual", &w.residual);
    }
    m
}

fn finish(command: &str, mut m: Map<String, Value>, outcome: Outcome) -> Report {
    insert(&mut m, "command", command);
    Report { body: Value::Object(m), csv: None, outcome }
}

fn objects(s: &Settings) -> Result<Vec<ChoiChannel>> {
    load_objects(&s.inputs)
}

pub fn robustness(s: &Settings) -> Result<Report> {
    let f = s.require_free_set()?;
    let xs = objects(s)?;
    let r = robustness_with(&xs, f, s.noise, &s.solver)?;
    solver_ok(r.status, "robustness")?;
    let outcome = if r.is_finite() { Outcome::Ok } else { Outcome::Infinite };
    Ok(finish("robustness", robustness_fields(&r, f, s.emit_witness), outcome))
}

pub fn weight(s: &Settings) -> Result<Report> {
    let f = s.require_free_set()?;
    let xs = objects(s)?;
    let w = weight_with(&xs, f, &s.solver)?;
    solver_ok(w.status, "weight")?;
    Ok(finish("weight", weight_fields(&w, f, s.emit_witness), Outcome::Ok))
}

pub fn emax(s: &Settings) -> Result<Report> {
    let f = s.require_free_set()?;
    let xs = objects(s)?;
    if xs.len() != 1 || !xs[0].is_state() {
        bail!("emax takes a single state");
    }
    let r = robustness_with(&xs, f, qres::freesets::NoiseSet::All, &s.solver)?;
    solver_ok(r.status, "robustness")?;
    let mut m = robustness_fields(&r, f, s.emit_witness);
    m.insert("robustness".into(), m["value"].clone());
    insert(&mut m, "value", (1.0 + r.value).log2());
    insert(&mut m, "unit", "bits");
    let outcome = if r.is_finite() { Outcome::Ok } else { Outcome::Infinite };
    Ok(finish("emax", m, outcome))
}

pub fn game_verify(s: &Settings) -> Result<Report> {
    let f = s.require_free_set()?;
    let xs = objects(s)?;
    let (mut m, report) = match s.measure {
        Measure::Robustness => {
            let r = robustness_with(&xs, f, s.noise, &s.solver)?;
            solver_ok(r.status, "robustness")?;
            if !r.is_finite() {
                let mut m = robustness_fields(&r, f, false);
                insert(&mut m, "measure", "robustness");
                return Ok(finish("game-verify", m, Outcome::Infinite));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(GAME_SEED);
            let rep = verify_advantage(&xs, f, s.noise, &r, &mut rng)?;
            (robustness_fields(&r, f, s.emit_witness), rep)
        }
        Measure::Weight => {
            let w = weight_with(&xs, f, &s.solver)?;
            solver_ok(w.status, "weight")?;
            let rep = verify_weight_advantage(&xs, f, &w)?;
            (weight_fields(&w, f, s.emit_witness), rep)
        }
    };
    insert(&mut m, "measure", s.measure);
    insert(&mut m, "ratio", report.ratio);
    insert(&mut m, "target", report.target);
    insert(&mut m, "deviation", report.deviation);
    insert(&mut m, "excluded", report.excluded);
    insert(&mut m, "passed", report.passed);
    insert(&mut m, "numerator", report.numerator);
    insert(&mut m, "denominator", report.denominator);
    insert(&mut m, "reconstruction_error", report.reconstruction_error);
    let outcome = if report.excluded || report.passed { Outcome::Ok } else { Outcome::Violation };
    Ok(finish("game-verify", m, outcome))
}

pub fn approx_sweep(s: &Settings) -> Result<Report> {
    let f = s.require_free_set()?;
    let xs = objects(s)?;
    f.check_object(&xs)?;
    let levels = match &s.levels {
        Some(l) => l.clone(),
        None => {
            let lay = mode_layout(f);
            let top = lay.outputs.iter().copied().chain(lay.input).max().unwrap_or(2).min(8);
            (2..=top.max(2)).collect()
        }
    };
    let mut plan = TruncationPlan::for_free_set(f, &levels)?;
    if let Some(a) = &s.anchor {
        plan = plan.with_anchor(a)?;
    }
    plan = plan.with_faithful_anchor(s.faithful);
    let kind = match s.measure {
        Measure::Robustness => QuantifierKind::Robustness,
        Measure::Weight => QuantifierKind::Weight,
    };
    let opts = SweepOptions { solver: s.solver.clone(), jobs: s.jobs, compute_ambient: true };
    let mut sweep = approximate_quantifier(&xs, f, s.noise, &plan, kind, &opts)?;
    let csv = sweep.to_csv();
    if !s.emit_witness {
        for r in sweep.results.iter_mut() {
            r.witness = None;
        }
    }
    let mut m = Map::new();
    insert(&mut m, "free_set", f.name());
    insert(&mut m, "kind", sweep.kind);
    insert(&mut m, "noise", sweep.noise);
    insert(&mut m, "levels", &sweep.levels);
    insert(&mut m, "values", sweep.values());
    insert(&mut m, "results", &sweep.results);
    insert(&mut m, "monotone_violations", &sweep.monotone_violations);
    insert(&mut m, "ambient_value", sweep.ambient_value);
    insert(&mut m, "upper_bound_violations", &sweep.upper_bound_violations);
    insert(&mut m, "failed_levels", sweep.failed_levels());
    insert(&mut m, "limit_estimate", sweep.limit_estimate);
    insert(&mut m, "hard_failure", sweep.hard_failure());
    let outcome = if sweep.hard_failure() { Outcome::Violation } else { Outcome::Ok };
    let mut rep = finish("approx-sweep", m, outcome);
    rep.csv = Some(csv);
    Ok(rep)
}

/// Options of the depolarizing bisection mode of `compat`.
pub struct Bisection {
    pub dim: usize,
    pub copies: usize,
    pub width: f64,
}

pub fn tuple_command(s: &Settings, command: &str, bisection: Option<Bisection>) -> Result<Report> {
    if let Some(b) = bisection {
        let (lo, hi) = depolarizing_compatibility_threshold(b.dim, b.copies, b.width)?;
        let mut m = Map::new();
        insert(&mut m, "free_set", "compatible_tuple");
        insert(&mut m, "dim", b.dim);
        insert(&mut m, "copies", b.copies);
        insert(&mut m, "width", b.width);
        insert(&mut m, "compatible_below", lo);
        insert(&mut m, "incompatible_above", hi);
        insert(&mut m, "threshold", 0.5 * (lo + hi));
        return Ok(finish(command, m, Outcome::Ok));
    }
    let xs = objects(s)?;
    let f = match (&s.free_set, command) {
        (Some(f), _) => f.clone(),
        (None, "compat") => {
            let din = xs.first().context("no input object given")?.dim_in();
            FreeSetSpec::CompatibleTuple { dim_in: din, dims_out: xs.iter().map(|x| x.dim_out()).collect() }
        }
        (None, _) => bail!("marginal needs --free-set to fix the shared and environment dimensions"),
    };
    let expected = if command == "compat" { "compatible_tuple" } else { "marginal_compatible" };
    if f.name() != expected {
        bail!("{command} works with {expected} free sets, got {}", f.name());
    }
    match s.mode {
        TupleMode::Robustness => {
            let r = robustness_with(&xs, &f, s.noise, &s.solver)?;
            solver_ok(r.status, "robustness")?;
            let mut m = robustness_fields(&r, &f, s.emit_witness);
            insert(&mut m, "mode", "robustness");
            let outcome = if r.is_finite() { Outcome::Ok } else { Outcome::Infinite };
            Ok(finish(command, m, outcome))
        }
        TupleMode::Weight => {
            let w = weight_with(&xs, &f, &s.solver)?;
            solver_ok(w.status, "weight")?;
            let mut m = weight_fields(&w, &f, s.emit_witness);
            insert(&mut m, "mode", "weight");
            Ok(finish(command, m, Outcome::Ok))
        }
        TupleMode::Membership => {
            f.check_object(&xs)?;
            let mem = f.membership(&xs)?;
            let comps: Vec<_> = xs.iter().map(|x| x.choi().clone()).collect();
            let mut m = Map::new();
            insert(&mut m, "free_set", f.name());
            insert(&mut m, "mode", "membership");
            insert(&mut m, "membership", mem);
            insert(&mut m, "feasible", mem.passes());
            insert(&mut m, "extension_distance", f.extension_distance(&comps)?);
            let outcome = if mem.passes() { Outcome::Ok } else { Outcome::Infinite };
            Ok(finish(command, m, outcome))
        }
    }
}

/// Renders the report in the requested format.
pub fn render(rep: &Report, format: crate::config::Format) -> String {
    match format {
        crate::config::Format::Json => crate::report::to_json(rep.body.clone()),
        crate::config::Format::Csv => rep.csv.clone().unwrap_or_else(|| crate::report::to_csv(&rep.body)),
    }
}
