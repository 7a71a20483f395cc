//! `twinmap` command-line experiments.
//!
//! Exit status: 0 on success, 2 for invalid input, 3 for numerical failures.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use config::{Experiment, ExperimentConfig};
use experiments::Context;

#[derive(Debug, Parser)]
#[command(name = "twinmap", version, about = "Experiments on interval maps with two indifferent fixed points")]
struct Args {
    /// TOML or JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism. Use 1 for byte-identical reruns.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; defaults to the config value or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config experiment.
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("twinmap: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match config::load(&args.config) {
        Ok(c) => c,
        Err(msg) => return fail(EXIT_VALIDATION, msg),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(e) = args.experiment {
        cfg.experiment = Some(e);
    }
    let Some(experiment) = cfg.experiment else {
        return fail(EXIT_VALIDATION, "no experiment given (config `experiment` or --experiment)");
    };
    let workers =
        args.workers.or(cfg.workers).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    cfg.workers = Some(workers);
    let out = args.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = Some(out.clone());
    if let Err(e) = cfg.map.validate() {
        return fail(EXIT_VALIDATION, e);
    }
    let cfg = cfg.resolve();

    match run(cfg, experiment, workers, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model(e)) if e.is_validation() => fail(EXIT_VALIDATION, e),
        Err(Failure::Model(e)) => fail(EXIT_NUMERICAL, e),
        Err(Failure::Io(e)) => fail(EXIT_NUMERICAL, format!("writing {}: {e}", out.display())),
    }
}

enum Failure {
    Model(twinmap::Error),
    Io(std::io::Error),
}

impl From<twinmap::Error> for Failure {
    fn from(e: twinmap::Error) -> Self {
        Failure::Model(e)
    }
}

fn run(cfg: ExperimentConfig, experiment: Experiment, workers: usize, out: &std::path::Path) -> Result<(), Failure> {
    let mut ctx = Context::new(cfg, workers)?;
    match experiment {
        Experiment::Classify => emit(&mut ctx, experiment, out, experiments::classify),
        Experiment::Partition => emit(&mut ctx, experiment, out, experiments::partition),
        Experiment::Induce => emit(&mut ctx, experiment, out, experiments::induce),
        Experiment::Density => emit(&mut ctx, experiment, out, experiments::density),
        Experiment::Tails => emit(&mut ctx, experiment, out, experiments::tails),
        Experiment::Corr => emit(&mut ctx, experiment, out, experiments::corr),
        Experiment::Limit => emit(&mut ctx, experiment, out, experiments::limit),
        Experiment::Lyapunov => emit(&mut ctx, experiment, out, experiments::lyapunov),
        Experiment::Report => emit(&mut ctx, experiment, out, experiments::report),
    }
}

fn emit<R: Serialize>(
    ctx: &mut Context,
    experiment: Experiment,
    out: &std::path::Path,
    f: fn(&mut Context) -> twinmap::Result<R>,
) -> Result<(), Failure> {
    let results = f(ctx)?;
    output::write_report(out, experiment.name(), ctx.cfg.seed, ctx.workers, &ctx.cfg, &ctx.warnings, &results, &ctx.series)
        .map_err(Failure::Io)
}
