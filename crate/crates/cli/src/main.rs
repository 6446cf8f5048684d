//! `kesten`: tail index, drift and tail constant of `R = M R + Q`, stage by stage.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 assumption
//! failure, 3 numerical failure, 4 failed checks in `pipeline`.

mod config;
mod output;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kesten_core::rng::Streams;

use config::RunConfig;
use output::{InputRef, OutDir, Provenance};
use stages::{Ctx, Failure, StageResult};

#[derive(Parser)]
#[command(
    name = "kesten",
    version,
    about = "Heavy-tail analysis of multivariate random difference equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions; nonzero exit on any hard failure.
    Audit(Common),
    /// Estimate the top Lyapunov exponent.
    Lyapunov(Common),
    /// Solve for the tail index and eigenfunction.
    Kappa(Common),
    /// Drift, stationary law, tail constant and Monte Carlo cross-checks.
    Tail(Common),
    /// Split-chain regeneration and its diagnostics.
    Regen(Common),
    /// Every stage in dependency order with one verdict.
    Pipeline(Common),
}

/// Per-run overrides of the configuration file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Grid resolution.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Number of R samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Relative truncation tolerance of the series.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub tmin: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub tpoints: Option<usize>,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML configuration with a [model] table.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    complete: bool,
    exit_code: u8,
    error: Option<&'a str>,
    stages: Option<&'a [stages::StageRecord]>,
    files: &'a [InputRef],
}

fn setup(c: &Common) -> StageResult<Ctx> {
    let mut cfg = RunConfig::load(&c.config).map_err(|e| Failure::Config(format!("{}: {e}", c.config.display())))?;
    cfg.apply(&c.overrides)?;
    if let Some(n) = c.workers {
        if n == 0 {
            return Err(Failure::Config("--workers must be positive".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out =
        OutDir::create(&c.out).map_err(|e| Failure::Config(format!("output directory {}: {e}", c.out.display())))?;
    let prov = Provenance::new(c.seed, cfg.hash());
    Ok(Ctx {
        cfg,
        streams: Streams::new(c.seed),
        prov,
        out,
    })
}

fn run(cmd: Command) -> StageResult<()> {
    let (name, common) = match &cmd {
        Command::Audit(c) => ("audit", c),
        Command::Lyapunov(c) => ("lyapunov", c),
        Command::Kappa(c) => ("kappa", c),
        Command::Tail(c) => ("tail", c),
        Command::Regen(c) => ("regen", c),
        Command::Pipeline(c) => ("pipeline", c),
    };
    let mut ctx = setup(common)?;
    let mut records = None;
    let result = match cmd {
        Command::Audit(_) => stages::audit(&mut ctx),
        Command::Lyapunov(_) => stages::lyapunov_stage(&mut ctx).map(|_| ()),
        Command::Kappa(_) => stages::kappa(&mut ctx).map(|_| ()),
        Command::Tail(_) => {
            stages::ensure_kappa(&mut ctx).and_then(|(sol, inputs)| stages::tail(&mut ctx, &sol, inputs).map(|_| ()))
        }
        Command::Regen(_) => stages::regen(&mut ctx, None).map(|_| ()),
        Command::Pipeline(_) => {
            let (r, res) = stages::pipeline(&mut ctx);
            records = Some(r);
            res
        }
    };
    let files = ctx.out.written().to_vec();
    let manifest = Manifest {
        command: name,
        complete: result.is_ok(),
        exit_code: result.as_ref().err().map_or(0, Failure::code),
        error: result.as_ref().err().map(Failure::message),
        stages: records.as_deref(),
        files: &files,
    };
    ctx.out.json("manifest.json", &ctx.prov, &manifest)?;
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
