//! `qres`: resource quantifiers, witness games and truncation sweeps from the
//! command line.
//!
//! Exit codes: 0 success, 1 input or solver error, 2 infinite value or
//! infeasible problem, 3 property violation.

mod commands;
mod config;
mod objects;
mod report;

use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{Bisection, Report};
use config::{CommonArgs, Measure, RunConfig, Settings, TupleMode};

#[derive(Parser)]
#[command(name = "qres", version, about = "Convex resource quantifiers via semidefinite programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generalised (N = all) or free (N = free) robustness.
    Robustness(CommonArgs),
    /// Convex weight.
    Weight(CommonArgs),
    /// Max-relative entropy of resource `log₂(1 + R)` of a state.
    Emax(CommonArgs),
    /// Builds the witness game and checks its advantage ratio.
    GameVerify(GameArgs),
    /// Quantifier along nested truncations of the modes.
    ApproxSweep(SweepArgs),
    /// Channel compatibility (broadcastability) of a tuple.
    Compat(CompatArgs),
    /// Marginal compatibility of a tuple of bipartite states.
    Marginal(TupleArgs),
    /// Runs the command named in a config file.
    Run {
        #[arg(long)]
        config: std::path::PathBuf,
    },
}

#[derive(Args)]
struct GameArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    measure: Option<Measure>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    measure: Option<Measure>,
    /// Mix a small multiple of the first-level identity into every anchor.
    #[arg(long)]
    faithful: bool,
}

#[derive(Args)]
struct TupleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    mode: Option<TupleMode>,
}

#[derive(Args)]
struct CompatArgs {
    #[command(flatten)]
    tuple: TupleArgs,
    /// Bisect the compatibility threshold of copies of the depolarizing
    /// channel on this dimension instead of reading inputs.
    #[arg(long)]
    bisect_depolarizing: Option<usize>,
    #[arg(long, default_value_t = 2)]
    copies: usize,
    #[arg(long, default_value_t = 1e-3)]
    width: f64,
}

fn dispatch(name: &str, s: &Settings, bisection: Option<Bisection>) -> Result<Report> {
    match name {
        "robustness" => commands::robustness(s),
        "weight" => commands::weight(s),
        "emax" => commands::emax(s),
        "game-verify" => commands::game_verify(s),
        "approx-sweep" => commands::approx_sweep(s),
        "compat" | "marginal" => commands::tuple_command(s, name, bisection),
        other => bail!("unknown command {other:?}"),
    }
}

fn run(cli: Cli) -> Result<(Report, Settings)> {
    let (name, settings, bisection) = match cli.command {
        Command::Robustness(c) => ("robustness", Settings::resolve(&c, None, None, false, None)?, None),
        Command::Weight(c) => ("weight", Settings::resolve(&c, None, None, false, None)?, None),
        Command::Emax(c) => ("emax", Settings::resolve(&c, None, None, false, None)?, None),
        Command::GameVerify(g) => ("game-verify", Settings::resolve(&g.common, g.measure, None, false, None)?, None),
        Command::ApproxSweep(a) => {
            ("approx-sweep", Settings::resolve(&a.common, a.measure, None, a.faithful, None)?, None)
        }
        Command::Compat(c) => {
            let b = c.bisect_depolarizing.map(|dim| Bisection { dim, copies: c.copies, width: c.width });
            ("compat", Settings::resolve(&c.tuple.common, None, c.tuple.mode, false, None)?, b)
        }
        Command::Marginal(t) => ("marginal", Settings::resolve(&t.common, None, t.mode, false, None)?, None),
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let name = cfg.command.clone().context("config file has no \"command\"")?;
            let name: &'static str = match name.as_str() {
                "robustness" => "robustness",
                "weight" => "weight",
                "emax" => "emax",
                "game-verify" => "game-verify",
                "approx-sweep" => "approx-sweep",
                "compat" => "compat",
                "marginal" => "marginal",
                other => bail!("unknown command {other:?} in config"),
            };
            (name, Settings::resolve(&CommonArgs::default(), None, None, false, Some(cfg))?, None)
        }
    };
    let report = dispatch(name, &settings, bisection)?;
    Ok((report, settings))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((report, settings)) => {
            let text = commands::render(&report, settings.format);
            match &settings.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(1);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::from(report.outcome.code())
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
