use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use kesten_core::error::Error;
use kesten_core::geometry::{lyapunov, project, GridFunction, LyapunovEstimate, SphereGrid, SpherePoint};
use kesten_core::linalg::Vector;
use kesten_core::model::{audit_assumptions, ModelSpec};
use kesten_core::operator::{solve_kappa, KappaSolution};
use kesten_core::regeneration::{
    presets, regeneration_increment_bounds, run_split_chain, validate_regeneration, MinorizationSpec, RegenDiagnostics,
    RegenKernel, SplitMode,
};
use kesten_core::rng::{tag, Streams};
use kesten_core::shifted_chain::{estimate_pi_alpha, ShiftedStepSampler, StationarySummary};
use kesten_core::tail::{default_directions, sample_r, tail_report, write_curves_csv, TailReport};

use crate::config::{RegenKernelChoice, RegenSetChoice, RunConfig};
use crate::output::{sha256_hex, InputRef, OutDir, Provenance};

/// A failed command, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Assumption(String),
    Numerical(String),
    Acceptance(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Assumption(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Acceptance(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Assumption(m) | Failure::Numerical(m) | Failure::Acceptance(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Config { .. }
            | Error::InvalidModel(_)
            | Error::InvalidArgument(_)
            | Error::Unsupported(_)
            | Error::MinorizationViolated(_)
            | Error::Io(_) => Failure::Config(m),
            _ => Failure::Numerical(m),
        }
    }
}

pub type StageResult<T> = std::result::Result<T, Failure>;

pub struct Ctx {
    pub cfg: RunConfig,
    pub streams: Streams,
    pub prov: Provenance,
    pub out: OutDir,
}

impl Ctx {
    fn spec(&self) -> &ModelSpec {
        &self.cfg.model
    }

    fn grid(&self) -> StageResult<Arc<SphereGrid>> {
        let d = self.spec().dimension;
        let res = self
            .cfg
            .grid
            .resolution
            .unwrap_or_else(|| SphereGrid::default_resolution(d));
        Ok(Arc::new(SphereGrid::new(d, res)?))
    }

    /// Identifies what the κ artifacts depend on, so later stages can reuse
    /// them across runs that only change downstream settings.
    fn kappa_key(&self) -> String {
        let key = serde_json::json!({
            "seed": self.prov.seed,
            "model": self.cfg.model,
            "operator": self.cfg.operator,
            "grid": self.cfg.grid,
        });
        sha256_hex(key.to_string().as_bytes())
    }
}

pub fn audit(ctx: &mut Ctx) -> StageResult<()> {
    let report = audit_assumptions(ctx.spec(), ctx.cfg.audit.n_samples, &ctx.streams)?;
    ctx.out.json("audit.json", &ctx.prov, &report)?;
    println!(
        "{:<6} {:<28} {:>14} {:>12}  {:<16} verdict",
        "check", "quantity", "estimate", "std err", "requirement"
    );
    for c in &report.checks {
        println!(
            "{:<6} {:<28} {:>14.6e} {:>12.3e}  {:<16} {:?}",
            c.assumption, c.quantity, c.estimate, c.std_error, c.requirement, c.verdict
        );
    }
    println!(
        "{:<6} {:<60} {:?}",
        "A6", report.nondegeneracy.detail, report.nondegeneracy.verdict
    );
    println!(
        "lyapunov hint: beta = {:.5} +/- {:.5}",
        report.lyapunov_hint.beta, report.lyapunov_hint.std_error
    );
    println!("overall: {:?}", report.overall);
    let hard = report.hard_failures();
    if hard.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assumption(format!(
            "assumption audit failed: {}",
            hard.join("; ")
        )))
    }
}

#[derive(Serialize)]
struct LyapunovFile {
    estimate: LyapunovEstimate,
    /// `β + 3 se < 0`
    negative: bool,
}

pub fn lyapunov_stage(ctx: &mut Ctx) -> StageResult<LyapunovEstimate> {
    let l = &ctx.cfg.lyapunov;
    let est = lyapunov(ctx.spec(), l.n_steps, l.n_chains, &ctx.streams)?;
    let negative = est.beta + 3.0 * est.std_error < 0.0;
    ctx.out.json(
        "lyapunov.json",
        &ctx.prov,
        &LyapunovFile {
            estimate: est,
            negative,
        },
    )?;
    println!("beta = {:.6} +/- {:.6}", est.beta, est.std_error);
    if negative {
        Ok(est)
    } else {
        Err(Failure::Assumption(format!(
            "top Lyapunov exponent {:.5} +/- {:.5} is not negative",
            est.beta, est.std_error
        )))
    }
}

#[derive(Serialize, Deserialize)]
struct KappaFile {
    inputs_sha256: String,
    kappa: f64,
    rho_at_kappa: f64,
    iterations: usize,
    mc_error: f64,
    log_rho_sd: f64,
    slope: f64,
    closed_form: bool,
    n_mc: usize,
    grid_resolution: usize,
    grid_points: usize,
    r_min: f64,
    r_max: f64,
}

#[derive(Serialize)]
struct KappaFailure {
    inputs_sha256: String,
    error: String,
    mc_error: f64,
    rho_curve: Vec<(f64, f64)>,
}

fn write_curve(w: &mut Vec<u8>, comments: &[String], curve: &[(f64, f64)]) -> kesten_core::error::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "varkappa,rho")?;
    for (k, r) in curve {
        writeln!(w, "{k:.16e},{r:.16e}")?;
    }
    Ok(())
}

pub fn kappa(ctx: &mut Ctx) -> StageResult<KappaSolution> {
    let grid = ctx.grid()?;
    let key = ctx.kappa_key();
    let sol = match solve_kappa(ctx.spec(), grid, &ctx.cfg.operator, &ctx.streams) {
        Ok(s) => s,
        Err(Error::Bracketing {
            reason,
            curve,
            mc_error,
        }) => {
            let msg = format!("no root of rho(varkappa) = 1 in (0, kappa0]: {reason}");
            ctx.out
                .csv("rho_curve.csv", &ctx.prov, |w, c| write_curve(w, c, &curve))?;
            let body = KappaFailure {
                inputs_sha256: key,
                error: msg.clone(),
                mc_error,
                rho_curve: curve,
            };
            ctx.out.json("kappa.json", &ctx.prov, &body)?;
            return Err(Failure::Numerical(msg));
        }
        Err(e) => return Err(e.into()),
    };
    let s = sol.summary();
    let body = KappaFile {
        inputs_sha256: key,
        kappa: s.kappa,
        rho_at_kappa: s.rho_at_kappa,
        iterations: s.iterations,
        mc_error: s.mc_error,
        log_rho_sd: s.log_rho_sd,
        slope: s.slope,
        closed_form: sol.closed_form,
        n_mc: s.n_mc,
        grid_resolution: s.grid_resolution,
        grid_points: s.grid_points,
        r_min: s.r_min,
        r_max: s.r_max,
    };
    ctx.out.json("kappa.json", &ctx.prov, &body)?;
    ctx.out
        .csv("rho_curve.csv", &ctx.prov, |w, c| sol.write_rho_curve_csv(w, c))?;
    ctx.out.csv("r.csv", &ctx.prov, |w, c| sol.r.write_csv(w, c))?;
    println!("kappa = {:.9} +/- {:.3e} ({})", sol.kappa, sol.mc_error, s.method);
    Ok(sol)
}

fn read_curve(path: &std::path::Path) -> Option<Vec<(f64, f64)>> {
    let f = File::open(path).ok()?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.ok()?;
        if line.starts_with('#') || line.starts_with("varkappa") || line.trim().is_empty() {
            continue;
        }
        let (a, b) = line.split_once(',')?;
        out.push((a.trim().parse().ok()?, b.trim().parse().ok()?));
    }
    Some(out)
}

/// Reads κ artifacts from the output directory when they were produced for
/// the same model, operator settings, grid and seed.
fn load_kappa(ctx: &Ctx) -> Option<(KappaSolution, Vec<InputRef>)> {
    let text = std::fs::read_to_string(ctx.out.path("kappa.json")).ok()?;
    let k: KappaFile = serde_json::from_str(&text).ok()?;
    if k.inputs_sha256 != ctx.kappa_key() {
        return None;
    }
    let grid = ctx.grid().ok()?;
    let r = GridFunction::read_csv(grid, BufReader::new(File::open(ctx.out.path("r.csv")).ok()?)).ok()?;
    let rho_curve = read_curve(&ctx.out.path("rho_curve.csv"))?;
    let inputs = ["kappa.json", "r.csv", "rho_curve.csv"]
        .iter()
        .map(|f| ctx.out.existing(f))
        .collect::<Option<Vec<_>>>()?;
    let sol = KappaSolution {
        kappa: k.kappa,
        rho_at_kappa: k.rho_at_kappa,
        rho_curve,
        r,
        iterations: k.iterations,
        mc_error: k.mc_error,
        log_rho_sd: k.log_rho_sd,
        slope: k.slope,
        closed_form: k.closed_form,
        n_mc: k.n_mc,
    };
    Some((sol, inputs))
}

/// κ artifacts from disk, or computed in this run.
pub fn ensure_kappa(ctx: &mut Ctx) -> StageResult<(KappaSolution, Vec<InputRef>)> {
    if let Some(found) = load_kappa(ctx) {
        println!("kappa = {:.9} (from existing artifacts)", found.0.kappa);
        return Ok(found);
    }
    let sol = kappa(ctx)?;
    let inputs = ctx
        .out
        .written()
        .iter()
        .filter(|r| ["kappa.json", "r.csv", "rho_curve.csv"].contains(&r.file.as_str()))
        .cloned()
        .collect();
    Ok((sol, inputs))
}

#[derive(Serialize)]
struct TailFile<'a> {
    pass: bool,
    stationary: StationarySummary,
    #[serde(flatten)]
    report: &'a TailReport,
}

pub fn tail(ctx: &mut Ctx, sol: &KappaSolution, inputs: Vec<InputRef>) -> StageResult<bool> {
    let prov = ctx.prov.with_inputs(inputs);
    let spec = ctx.spec().clone();
    let grid = ctx.grid()?;
    let chain = &ctx.cfg.chain;
    let sampler = ShiftedStepSampler::new(&spec, sol, chain.n_prop)?;
    let pi = estimate_pi_alpha(
        &sampler,
        grid,
        chain.n_steps,
        chain.burn_in,
        &mut ctx.streams.rng(tag::SHIFTED_CHAIN, 0),
    )?;
    ctx.out.csv("stationary.csv", &prov, |w, c| pi.write_csv(w, c))?;
    println!("alpha = {:.6} +/- {:.6}", pi.alpha, pi.alpha_se);
    pi.check_drift()?;

    let cfg = ctx.cfg.tail.clone();
    let samples = sample_r(&spec, &cfg.truncation, cfg.n_samples, &ctx.streams)?;
    let dirs = default_directions(&sol.r, cfg.random_directions, &ctx.streams);
    let rep = tail_report(&spec, sol, &pi, &samples, &dirs, &cfg, cfg.n_samples, &ctx.streams)?;
    let pass = rep.pass();
    ctx.out.json(
        "tail_report.json",
        &prov,
        &TailFile {
            pass,
            stationary: pi.summary(),
            report: &rep,
        },
    )?;
    ctx.out
        .csv("survival.csv", &prov, |w, c| write_curves_csv(&rep.curves, w, c))?;
    ctx.out.csv("hill.csv", &prov, |w, c| {
        for line in c {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "trace,fraction,k,kappa,std_error")?;
        let pooled = ("pooled".to_string(), rep.pooled_hill.clone());
        for (name, trace) in std::iter::once(&pooled).chain(&rep.hill_traces) {
            for p in trace {
                writeln!(
                    w,
                    "{name},{:.6e},{},{:.16e},{:.16e}",
                    p.fraction, p.k, p.kappa, p.std_error
                )?;
            }
        }
        Ok(())
    })?;
    let t = &rep.triangle;
    println!(
        "K0 = {:.6e} +/- {:.3e}; triangle: operator {:.4}, hill {:.4}, slope {:.4} (max gap {:.4})",
        rep.k0.k0, rep.k0.std_error, t.operator_kappa, t.hill_kappa, t.slope_kappa, t.max_pairwise
    );
    println!("tail checks: {}", if pass { "pass" } else { "FAIL" });
    Ok(pass)
}

fn kernel_label(k: &RegenKernel) -> &'static str {
    match k {
        RegenKernel::Tabulated { .. } => "tabulated",
        RegenKernel::HaarSimilarity { .. } => "haar_similarity",
        RegenKernel::ScalarScale { .. } => "scalar_scale",
        RegenKernel::GaussianPerturbed { .. } => "gaussian_perturbed",
    }
}

fn is_shiftable(spec: &ModelSpec) -> bool {
    RegenKernel::shifted(
        spec,
        0.0,
        &GridFunction::constant(
            Arc::new(
                SphereGrid::new(spec.dimension, SphereGrid::default_resolution(spec.dimension))
                    .expect("valid dimension"),
            ),
            1.0,
        ),
    )
    .is_ok()
}

fn choose_minorization(ctx: &Ctx, kernel: &RegenKernel) -> StageResult<(MinorizationSpec, SpherePoint)> {
    let r = &ctx.cfg.regen;
    let dim = kernel.dim();
    let center = match &r.center {
        Some(c) => project(&Vector::from_slice(c))?,
        None => SpherePoint::basis(dim, 0),
    };
    let small_set = |x0: SpherePoint| -> StageResult<MinorizationSpec> {
        let p = r.p.unwrap_or(0.5 * kernel.density(&x0, &x0));
        Ok(presets::tabulated_small_set(kernel, x0, p)?)
    };
    let minor = match r.set {
        RegenSetChoice::WholeSphere => presets::whole_sphere(dim, r.p.unwrap_or(0.2))?,
        RegenSetChoice::Doeblin => presets::tabulated_doeblin(kernel)?,
        RegenSetChoice::SmallSet => small_set(center)?,
        RegenSetChoice::Ball => presets::density_ball(kernel, center, r.radius)?,
        RegenSetChoice::Auto => match kernel {
            RegenKernel::HaarSimilarity { .. } => presets::whole_sphere(dim, r.p.unwrap_or(0.2))?,
            RegenKernel::GaussianPerturbed { .. } => presets::density_ball(kernel, center, r.radius)?,
            _ => match presets::tabulated_doeblin(kernel) {
                Ok(m) => m,
                Err(_) => {
                    let x0 = if kernel.density(&center, &center) > 0.0 {
                        center
                    } else {
                        center.neg()
                    };
                    small_set(x0)?
                }
            },
        },
    };
    let x0 = match &minor.set {
        kesten_core::regeneration::RegenSet::Ball { center, .. } => *center,
        _ => center,
    };
    Ok((minor, x0))
}

#[derive(Serialize)]
struct RegenFile<'a> {
    pass: bool,
    kernel: &'static str,
    shifted: bool,
    kappa: Option<f64>,
    mode: SplitMode,
    minorization: &'a MinorizationSpec,
    n_steps: usize,
    n_epochs: usize,
    diagnostics: &'a RegenDiagnostics,
    /// Observed range of `U_{σ_k}`, when enough cycles completed.
    increment_range: Option<(f64, f64)>,
}

/// Builds the split chain from the configured kernel and minorization; needs
/// κ artifacts only for shifted kernels.
pub fn regen(ctx: &mut Ctx, known: Option<(&KappaSolution, Vec<InputRef>)>) -> StageResult<bool> {
    let spec = ctx.spec().clone();
    let want_shifted = match ctx.cfg.regen.kernel {
        RegenKernelChoice::Base => false,
        RegenKernelChoice::Shifted => true,
        RegenKernelChoice::Auto => is_shiftable(&spec),
    };
    let (kernel, kappa, inputs) = if want_shifted {
        let (sol, inputs) = match known {
            Some((s, i)) => (s.clone(), i),
            None => ensure_kappa(ctx)?,
        };
        (RegenKernel::shifted(&spec, sol.kappa, &sol.r)?, Some(sol.kappa), inputs)
    } else {
        (RegenKernel::base(&spec)?, None, Vec::new())
    };
    let prov = ctx.prov.with_inputs(inputs);
    let (minor, x0) = choose_minorization(ctx, &kernel)?;
    let r = &ctx.cfg.regen;
    let mode = if r.naive {
        SplitMode::NaiveCoin
    } else {
        SplitMode::Split
    };
    let trace = run_split_chain(
        &kernel,
        &minor,
        x0,
        r.n_steps,
        mode,
        r.residual_budget,
        &mut ctx.streams.rng(tag::REGENERATION, 0),
    )?;
    ctx.out.csv("regen_trace.csv", &prov, |w, c| trace.write_csv(w, c))?;
    let diag = validate_regeneration(&trace, &ctx.streams)?;
    let bounds = regeneration_increment_bounds(&trace).ok();
    ctx.out.json(
        "regen.json",
        &prov,
        &RegenFile {
            pass: diag.pass,
            kernel: kernel_label(&kernel),
            shifted: want_shifted,
            kappa,
            mode,
            minorization: &minor,
            n_steps: trace.n_steps(),
            n_epochs: trace.epochs.len(),
            diagnostics: &diag,
            increment_range: bounds.map(|b| (b.s_low, b.s_high)),
        },
    )?;
    println!(
        "regeneration: {} cycles, mean length {:.4}, phi-check D = {:.4} (1% critical {:.4}): {}",
        diag.n_cycles,
        diag.mean_length.mean,
        diag.phi_check.statistic,
        diag.phi_check.critical_1pct,
        if diag.pass { "pass" } else { "FAIL" }
    );
    Ok(diag.pass)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub stage: &'static str,
    pub status: Status,
    /// Verdict of the stage's own checks, when it has any.
    pub pass: Option<bool>,
    pub message: Option<String>,
}

impl StageRecord {
    fn ok(stage: &'static str, pass: Option<bool>) -> Self {
        StageRecord {
            stage,
            status: Status::Ok,
            pass,
            message: None,
        }
    }
}

#[derive(Serialize)]
struct PipelineFile<'a> {
    pass: bool,
    stages: &'a [StageRecord],
}

/// All stages in dependency order; the first failing stage aborts the rest.
pub fn pipeline(ctx: &mut Ctx) -> (Vec<StageRecord>, StageResult<()>) {
    let mut records = Vec::new();
    let result = run_pipeline(ctx, &mut records);
    let pass = result.is_ok();
    if let Err(e) = ctx
        .out
        .json("pipeline.json", &ctx.prov, &PipelineFile { pass, stages: &records })
    {
        return (records, Err(e.into()));
    }
    (records, result)
}

fn run_pipeline(ctx: &mut Ctx, records: &mut Vec<StageRecord>) -> StageResult<()> {
    fn step<T>(records: &mut Vec<StageRecord>, stage: &'static str, r: StageResult<T>) -> StageResult<T> {
        if let Err(e) = &r {
            records.push(StageRecord {
                stage,
                status: Status::Failed,
                pass: Some(false),
                message: Some(e.message().to_string()),
            });
        }
        r
    }
    let r = audit(ctx);
    step(records, "audit", r)?;
    records.push(StageRecord::ok("audit", Some(true)));
    let r = lyapunov_stage(ctx);
    step(records, "lyapunov", r)?;
    records.push(StageRecord::ok("lyapunov", Some(true)));
    let r = kappa(ctx);
    let sol = step(records, "kappa", r)?;
    records.push(StageRecord::ok("kappa", None));
    let inputs: Vec<InputRef> = ctx
        .out
        .written()
        .iter()
        .filter(|r| ["kappa.json", "r.csv", "rho_curve.csv"].contains(&r.file.as_str()))
        .cloned()
        .collect();
    let r = tail(ctx, &sol, inputs.clone());
    let tail_pass = step(records, "tail", r)?;
    records.push(StageRecord::ok("tail", Some(tail_pass)));

    let spec = ctx.spec().clone();
    let regen_pass = if RegenKernel::base(&spec).is_err() && !is_shiftable(&spec) {
        records.push(StageRecord {
            stage: "regen",
            status: Status::Skipped,
            pass: None,
            message: Some("no explicit split-chain kernel for this family".into()),
        });
        true
    } else {
        let r = regen(ctx, Some((&sol, inputs)));
        let p = step(records, "regen", r)?;
        records.push(StageRecord::ok("regen", Some(p)));
        p
    };
    if tail_pass && regen_pass {
        Ok(())
    } else {
        let failed: Vec<&str> = records
            .iter()
            .filter(|r| r.pass == Some(false))
            .map(|r| r.stage)
            .collect();
        Err(Failure::Acceptance(format!("checks failed in: {}", failed.join(", "))))
    }
}
