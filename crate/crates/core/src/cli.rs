//! Command-line front end: argument parsing, command dispatch and exit codes.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 schema or usage error,
//! 3 at least one check failed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{
    burgers_characteristics, spike_absorption_reference, Convention, MarcenkoPastur, SemicircleFamily,
};
use crate::config::{
    section_from_value, BarrierConfig, CheckName, ReferenceConfig, RunConfig, SchemaError, SimulateConfig, SolveConfig,
    SolvePlan, SpikeSpec, SweepTarget, VarianceLawConfig, VerifyConfig,
};
use crate::diagnostics::{
    check_comparison, check_entropy_identity, check_linf_bound, check_lp_decay, check_variance_identity,
    check_w_contraction, pure_linf_bound, render_table, CheckReport, VarianceLaw,
};
use crate::error::LabError;
use crate::grid::{density_to_cdf, ParticleEnsemble};
use crate::measure::functionals::{free_entropy, mean, variance};
use crate::measure::io::{write_cdf, write_density};
use crate::particle::{simulate, TrajectoryRecord};
use crate::pde::{solve_cdf, solve_density, solve_wishart, FlowRecord};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_CHECKS: i32 = 3;

/// Above this many replicas only the pooled summary is written.
const MAX_TRAJECTORY_FILES: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(#[from] SchemaError),
    #[error("runtime error: {0}")]
    Runtime(#[from] LabError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema(_) => EXIT_SCHEMA,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Raw,
    Paper,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Raw => Convention::Raw,
            ConventionArg::Paper => Convention::Paper,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dyson-lab",
    version,
    about = "Interacting particle simulation, nonlocal transport solvers, reference solutions and identity checks"
)]
pub struct Cli {
    /// JSON run configuration with `"schema": 1`
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output root; every command writes below it
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Random seed (overrides the config)
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for replicas, sweeps and grid-parallel work
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Time convention of reference solutions and reported spike paths
    #[arg(long, global = true, value_enum)]
    pub convention: Option<ConventionArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the interacting particle system
    Simulate(SimulateArgs),
    /// Solve the mean-field equation from the `solve` section
    Solve,
    /// Write a closed-form or characteristics reference
    Reference,
    /// Run checks on a solved flow; exits 3 if any fails
    Verify(VerifyArgs),
    /// Run the cartesian product of the `sweep` axes concurrently
    Sweep,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of particles
    #[arg(long)]
    pub n: Option<usize>,
    /// Time step
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time
    #[arg(long = "t-end", value_name = "T")]
    pub t_end: Option<f64>,
    /// Interaction kernel: dyson | quadratic(eps) | gaussian | wishart | table:PATH
    #[arg(long)]
    pub kernel: Option<String>,
    /// Wishart dynamics with ratio eta >= 1
    #[arg(long)]
    pub eta: Option<f64>,
    /// Barrier: `R0,eps` (penalized) or `R0` (hard wall)
    #[arg(long, value_name = "R0,eps")]
    pub barrier: Option<String>,
    /// Spike: `lambda0,a-spec` with a-spec const | linear:RATE | table:PATH
    #[arg(long, value_name = "lambda0,a-spec")]
    pub spike: Option<String>,
    /// Independent replicas
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Number of equally spaced recording times
    #[arg(long)]
    pub samples: Option<usize>,
    /// Record moments only
    #[arg(long)]
    pub moments_only: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Comma-separated checks: entropy,lp,linf,variance,comparison,contraction
    #[arg(long, value_name = "LIST")]
    pub checks: Option<String>,
    /// Flow directory relative to the output root
    #[arg(long, value_name = "DIR")]
    pub input: Option<String>,
    /// Second flow for comparison and contraction
    #[arg(long, value_name = "DIR")]
    pub against: Option<String>,
}

/// The clap command, with every subcommand flag listed in the top-level help.
pub fn command() -> clap::Command {
    let cmd = Cli::command();
    let mut listing = String::from("Subcommand flags:\n");
    for sub in cmd.get_subcommands() {
        let flags: Vec<String> = sub.get_arguments().filter_map(|a| a.get_long().map(|l| format!("--{l}"))).collect();
        let flags = if flags.is_empty() { "(global flags only)".to_string() } else { flags.join(" ") };
        listing += &format!("  {:<9} {flags}\n", sub.get_name());
    }
    listing += "\nExit codes: 0 ok, 1 runtime error, 2 config/usage error, 3 check failure";
    cmd.after_help(listing)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_SCHEMA;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dyson-lab: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a pool of `--jobs` threads.
pub fn run(cli: &Cli) -> CliResult<i32> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::empty(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(SchemaError("--jobs must be at least 1".into()).into());
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let ctx = Context {
        out: cli.out.clone(),
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        convention: cli.convention.map(Convention::from).or(cfg.convention).unwrap_or_default(),
        config_hash: cfg.hash(),
    };
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, &cfg, a),
        Command::Solve => cmd_solve(&ctx, &cfg),
        Command::Reference => cmd_reference(&ctx, &cfg),
        Command::Verify(a) => cmd_verify(&ctx, &cfg, a),
        Command::Sweep => cmd_sweep(&ctx, &cfg),
    })
}

struct Context {
    out: PathBuf,
    seed: u64,
    convention: Convention,
    config_hash: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    schema: u32,
    version: &'a str,
    config_hash: &'a str,
    seed: u64,
    convention: Convention,
}

fn write_json(path: &Path, v: &impl Serialize) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn write_run_manifest(ctx: &Context, dir: &Path, command: &str) -> CliResult<()> {
    write_json(
        &dir.join("run.json"),
        &RunManifest {
            command,
            schema: crate::config::SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &ctx.config_hash,
            seed: ctx.seed,
            convention: ctx.convention,
        },
    )
}

// ---------------------------------------------------------------------------
// simulate

fn simulate_section(cfg: &RunConfig, a: &SimulateArgs) -> CliResult<SimulateConfig> {
    let mut s = cfg.simulate.clone().unwrap_or_default();
    if let Some(v) = a.n {
        s.n = v;
    }
    if let Some(v) = a.dt {
        s.dt = v;
    }
    if let Some(v) = a.t_end {
        s.t_end = v;
    }
    if let Some(v) = &a.kernel {
        s.kernel = v.clone();
    }
    if a.eta.is_some() {
        s.eta = a.eta;
    }
    if let Some(b) = &a.barrier {
        s.barrier = Some(BarrierConfig::parse_flag(b)?);
    }
    if let Some(sp) = &a.spike {
        s.spike = Some(SpikeSpec::parse_flag(sp)?);
    }
    if let Some(r) = a.replicas {
        s.replicas = r;
    }
    if let Some(k) = a.samples {
        if k == 0 {
            return Err(SchemaError("--samples must be at least 1".into()).into());
        }
        s.sample_times = (1..=k).map(|i| s.t_start + (s.t_end - s.t_start) * i as f64 / k as f64).collect();
    }
    s.moments_only |= a.moments_only;
    Ok(s)
}

#[derive(Debug, Serialize)]
struct GapSummary {
    mean_s2: f64,
    standard_error: f64,
    /// `s0² + 4t` for two particles under the raw convention.
    ito_expectation: f64,
    z_score: f64,
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    t: f64,
    mean: f64,
    variance: f64,
    max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<GapSummary>,
}

#[derive(Debug, Serialize)]
struct SpikeSummary {
    replica: usize,
    absorbed_at: Option<f64>,
    z_zero_time: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    n: usize,
    replicas: usize,
    seed: u64,
    trajectories_written: bool,
    samples: Vec<SampleSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    spikes: Vec<SpikeSummary>,
}

fn summarize(recs: &[TrajectoryRecord], n: usize, initial: &[f64]) -> Vec<SampleSummary> {
    let times = &recs[0].times;
    (0..times.len())
        .map(|k| {
            let t = times[k];
            let (mut s1, mut s2, mut mx, mut count) = (0.0, 0.0, f64::NEG_INFINITY, 0.0);
            for r in recs {
                let m = &r.moments[k];
                s1 += m.m1;
                s2 += m.m2;
                mx = mx.max(m.max);
                count += 1.0;
            }
            let (m1, m2) = (s1 / count, s2 / count);
            let gap = (n == 2 && !recs[0].ensembles.is_empty()).then(|| {
                let s: Vec<f64> = recs
                    .iter()
                    .map(|r| {
                        let p = r.ensembles[k].positions();
                        (p[1] - p[0]).powi(2)
                    })
                    .collect();
                let c = s.len() as f64;
                let mean_s2 = s.iter().sum::<f64>() / c;
                let var = if c > 1.0 { s.iter().map(|v| (v - mean_s2).powi(2)).sum::<f64>() / (c - 1.0) } else { 0.0 };
                let standard_error = (var / c).sqrt();
                let s0 = (initial[1] - initial[0]).powi(2);
                let ito_expectation = s0 + 4.0 * (t - recs[0].times[0]);
                let z_score = if standard_error > 1e-9 * mean_s2.abs().max(1.0) {
                    (mean_s2 - ito_expectation) / standard_error
                } else {
                    0.0
                };
                GapSummary { mean_s2, standard_error, ito_expectation, z_score }
            });
            SampleSummary { t, mean: m1, variance: m2 - m1 * m1, max: mx, gap }
        })
        .collect()
}

fn cmd_simulate(ctx: &Context, cfg: &RunConfig, a: &SimulateArgs) -> CliResult<i32> {
    let section = simulate_section(cfg, a)?;
    let sde = section.to_sde(ctx.seed)?;
    let dir = ctx.out.join("simulate");
    fs::create_dir_all(&dir)?;
    let recs = simulate(&sde)?;
    let written = recs.len() <= MAX_TRAJECTORY_FILES;
    if written {
        for (r, rec) in recs.iter().enumerate() {
            rec.write_jsonl(&dir.join(format!("replica_{r:04}.jsonl")))?;
        }
    }
    let spikes = recs
        .iter()
        .enumerate()
        .filter_map(|(replica, r)| {
            r.spike.as_ref().map(|s| SpikeSummary {
                replica,
                absorbed_at: s.absorbed_at,
                z_zero_time: s.z_zero_time(ctx.convention, 0.2, 0.8),
            })
        })
        .collect();
    let summary = SimulateSummary {
        n: sde.n,
        replicas: sde.replicas,
        seed: ctx.seed,
        trajectories_written: written,
        samples: summarize(&recs, sde.n, &sde.initial.positions(sde.n)),
        spikes,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_run_manifest(ctx, &dir, "simulate")?;
    for s in &summary.samples {
        match &s.gap {
            Some(g) => println!(
                "t={:<8.4} E[s^2]={:.5} ± {:.5}  expected {:.5}  z={:+.2}",
                s.t, g.mean_s2, g.standard_error, g.ito_expectation, g.z_score
            ),
            None => println!("t={:<8.4} mean={:+.5} var={:.5} max={:.5}", s.t, s.mean, s.variance, s.max),
        }
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// solve

fn run_solve(section: &SolveConfig) -> CliResult<FlowRecord> {
    let plan = section.plan()?;
    Ok(match plan {
        SolvePlan::Density { m0, eq, spec } => solve_density(&m0, &eq, &spec)?,
        SolvePlan::Cdf { u0, eq, spec } => solve_cdf(&u0, &eq, &spec)?,
        SolvePlan::Wishart { u0, eta, drift, spec } => solve_wishart(&u0, eta, &drift, &spec)?,
    })
}

fn cmd_solve(ctx: &Context, cfg: &RunConfig) -> CliResult<i32> {
    let section = cfg.solve.clone().unwrap_or_default();
    let flow = run_solve(&section)?;
    let dir = ctx.out.join("flow");
    flow.write(&dir)?;
    write_run_manifest(ctx, &dir, "solve")?;
    let h = &flow.health;
    println!(
        "{}: {} snapshots to t={} in {} steps (dt {:.3e}..{:.3e}), clipped {:.2e}, clamp {:.2e}",
        flow.label,
        flow.len(),
        flow.times.last().copied().unwrap_or(0.0),
        h.steps,
        h.min_dt,
        h.max_dt,
        h.clipped_mass,
        h.max_clamp
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// reference

fn cmd_reference(ctx: &Context, cfg: &RunConfig) -> CliResult<i32> {
    let section = cfg.reference.clone().unwrap_or(ReferenceConfig::Semicircle {
        t: 1.0,
        center: 0.0,
        grid: crate::config::GridConfig { a: -3.0, b: 3.0, h: 0.01 },
    });
    let dir = ctx.out.join("reference");
    fs::create_dir_all(&dir)?;
    let conv = ctx.convention;
    match &section {
        ReferenceConfig::Semicircle { t, center, grid } => {
            let grid = grid.build().map_err(SchemaError::from)?;
            let fam = SemicircleFamily::at_time(conv, *t).map_err(SchemaError::from)?;
            let m = crate::grid::GridDensity::from_fn(grid, |x| fam.density(x - center), false)?;
            let u = crate::grid::CdfGrid::from_fn(grid, |x| fam.cdf(x - center))?;
            write_density(&dir.join("density.csv"), &m, Some(*t))?;
            write_cdf(&dir.join("cdf.csv"), &u, Some(*t))?;
            println!("semicircle ({conv}) t={t}: radius {:.6}, variance {:.6}", fam.radius, fam.variance());
        }
        ReferenceConfig::MarcenkoPastur { eta, grid } => {
            let grid = grid.build().map_err(SchemaError::from)?;
            let mp = MarcenkoPastur::new(*eta, conv).map_err(SchemaError::from)?;
            write_density(&dir.join("density.csv"), &mp.sample(grid)?, None)?;
            write_cdf(&dir.join("cdf.csv"), &mp.sample_cdf(grid)?, None)?;
            let (a, b) = mp.edges();
            println!("Marcenko-Pastur ({conv}) eta={eta}: edges [{a:.6}, {b:.6}]");
        }
        ReferenceConfig::Characteristics { seed, t, grid } => {
            let grid = grid.build().map_err(SchemaError::from)?;
            // the oracle runs in raw time; the printed convention runs four times slower
            let raw_t = match conv {
                Convention::Raw => *t,
                Convention::Paper => *t / 4.0,
            };
            let m = burgers_characteristics(seed, raw_t, grid)?;
            write_density(&dir.join("density.csv"), &m, Some(*t))?;
            write_cdf(&dir.join("cdf.csv"), &density_to_cdf(&m), Some(*t))?;
            println!("characteristics t={t}: grid mass {:.6}", m.grid_mass());
        }
        ReferenceConfig::Spike { lambda0 } => {
            let r = spike_absorption_reference(*lambda0, conv).map_err(SchemaError::from)?;
            let mut w = csv::Writer::from_path(dir.join("spike.csv")).map_err(LabError::from)?;
            w.write_record(["t", "lambda", "z"]).map_err(LabError::from)?;
            for k in 0..r.times.len() {
                w.write_record([r.times[k].to_string(), r.lambda[k].to_string(), r.z[k].to_string()])
                    .map_err(LabError::from)?;
            }
            w.flush()?;
            write_json(
                &dir.join("spike.json"),
                &serde_json::json!({ "lambda0": lambda0, "t0": r.t0, "convention": conv }),
            )?;
            println!("spike ({conv}) lambda0={lambda0}: absorbed at t0={:.10}", r.t0);
        }
    }
    write_run_manifest(ctx, &dir, "reference")?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// verify

fn run_checks(v: &VerifyConfig, flow: &FlowRecord, against: Option<&FlowRecord>) -> CliResult<Vec<CheckReport>> {
    let t0 = flow.times.first().copied().unwrap_or(0.0);
    let t1 = flow.times.last().copied().unwrap_or(0.0);
    let need_pair = |name: &str| -> CliResult<&FlowRecord> {
        against.ok_or_else(|| SchemaError(format!("check '{name}' needs a second flow (--against)")).into())
    };
    let mut out = Vec::new();
    for c in &v.checks {
        let r = match c {
            CheckName::Entropy => {
                let window = v.window.unwrap_or((t0 + 0.1 * (t1 - t0), t1));
                check_entropy_identity(flow, window, v.entropy_rel, 1e-9)?
            }
            CheckName::Lp => check_lp_decay(flow, &[2.0, 3.0, f64::INFINITY], v.lp_slack)?,
            CheckName::Linf => {
                check_linf_bound(flow, v.linf_bound.unwrap_or_else(|| pure_linf_bound(flow.grid.h)), v.linf_t_min)
            }
            CheckName::Variance => {
                let law = match v.variance_law {
                    VarianceLawConfig::Free => VarianceLaw::Free,
                    VarianceLawConfig::Linear { a } => VarianceLaw::Linear { a },
                    VarianceLawConfig::Frozen => VarianceLaw::Frozen,
                };
                check_variance_identity(flow, law, v.variance_tol)
            }
            CheckName::Comparison => check_comparison(flow, need_pair("comparison")?, v.pair_slack)?,
            CheckName::Contraction => check_w_contraction(flow, need_pair("contraction")?, 2.0, v.pair_slack)?,
        };
        out.push(r);
    }
    Ok(out)
}

fn cmd_verify(ctx: &Context, cfg: &RunConfig, a: &VerifyArgs) -> CliResult<i32> {
    let mut v = cfg.verify.clone().unwrap_or_default();
    if let Some(list) = &a.checks {
        v.checks = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    }
    if let Some(i) = &a.input {
        v.input = i.clone();
    }
    if a.against.is_some() {
        v.against = a.against.clone();
    }
    if v.checks.is_empty() {
        return Err(SchemaError("no checks requested".into()).into());
    }
    let flow = FlowRecord::read(&ctx.out.join(&v.input))?;
    let against = match &v.against {
        Some(p) => Some(FlowRecord::read(&ctx.out.join(p))?),
        None => None,
    };
    let reports = run_checks(&v, &flow, against.as_ref())?;
    let dir = ctx.out.join("verify");
    write_json(&dir.join("report.json"), &reports)?;
    let table = render_table(&reports);
    fs::write(dir.join("report.txt"), &table)?;
    write_run_manifest(ctx, &dir, "verify")?;
    print!("{table}");
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { EXIT_CHECKS })
}

// ---------------------------------------------------------------------------
// sweep

/// Per-job scalars written to the aggregated CSV.
fn solve_metrics(flow: &FlowRecord) -> Vec<(String, f64)> {
    let m = flow.final_density();
    let h = &flow.health;
    vec![
        ("t_end".into(), flow.times.last().copied().unwrap_or(0.0)),
        ("mass".into(), m.grid_mass()),
        ("mean".into(), mean(m)),
        ("variance".into(), variance(m)),
        ("max_density".into(), m.max_value()),
        ("free_entropy".into(), free_entropy(m)),
        ("steps".into(), h.steps as f64),
        ("min_dt".into(), h.min_dt),
        ("clipped_mass".into(), h.clipped_mass),
        ("max_clamp".into(), h.max_clamp),
        ("rejected_steps".into(), h.rejected_steps as f64),
    ]
}

fn simulate_metrics(recs: &[TrajectoryRecord]) -> CliResult<Vec<(String, f64)>> {
    let last: Vec<&ParticleEnsemble> = recs.iter().filter_map(|r| r.final_ensemble()).collect();
    let (m1, m2, mx) = if last.len() == recs.len() {
        let e = ParticleEnsemble::pooled(last)?;
        let p = e.positions();
        let n = p.len() as f64;
        let m1 = p.iter().sum::<f64>() / n;
        (m1, p.iter().map(|x| x * x).sum::<f64>() / n, e.max())
    } else {
        let k = recs.len() as f64;
        let m = |f: fn(&crate::particle::Moments) -> f64| {
            recs.iter().map(|r| f(r.moments.last().unwrap())).sum::<f64>() / k
        };
        (m(|m| m.m1), m(|m| m.m2), recs.iter().map(|r| r.moments.last().unwrap().max).fold(f64::NEG_INFINITY, f64::max))
    };
    Ok(vec![
        ("t_end".into(), recs[0].times.last().copied().unwrap_or(0.0)),
        ("mean".into(), m1),
        ("variance".into(), m2 - m1 * m1),
        ("max".into(), mx),
    ])
}

fn csv_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn cmd_sweep(ctx: &Context, cfg: &RunConfig) -> CliResult<i32> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| SchemaError("sweep needs a 'sweep' section in --config".into()))?;
    let jobs = sweep.jobs()?;
    let dir = ctx.out.join("sweep");
    // validate every job before running any
    enum Job {
        Solve(SolveConfig),
        Simulate(crate::particle::SdeConfig),
    }
    let built: Vec<Job> = jobs
        .iter()
        .map(|j| {
            let origin = format!("sweep job {}", j.index);
            Ok(match sweep.target {
                SweepTarget::Solve => {
                    let s: SolveConfig = section_from_value(j.section.clone(), &origin)?;
                    s.plan().map_err(|e| SchemaError(format!("{origin}: {e}")))?;
                    Job::Solve(s)
                }
                SweepTarget::Simulate => {
                    let s: SimulateConfig = section_from_value(j.section.clone(), &origin)?;
                    Job::Simulate(s.to_sde(ctx.seed).map_err(|e| SchemaError(format!("{origin}: {e}")))?)
                }
            })
        })
        .collect::<std::result::Result<_, SchemaError>>()?;
    let results: Vec<CliResult<Vec<(String, f64)>>> = built
        .par_iter()
        .zip(&jobs)
        .map(|(job, spec)| {
            let jd = dir.join(format!("job_{:04}", spec.index));
            fs::create_dir_all(&jd)?;
            write_json(&jd.join("section.json"), &spec.section)?;
            match job {
                Job::Solve(s) => {
                    let flow = run_solve(s)?;
                    flow.write(&jd.join("flow"))?;
                    Ok(solve_metrics(&flow))
                }
                Job::Simulate(sde) => {
                    let recs = simulate(sde)?;
                    for (r, rec) in recs.iter().enumerate().take(MAX_TRAJECTORY_FILES) {
                        rec.write_jsonl(&jd.join(format!("replica_{r:04}.jsonl")))?;
                    }
                    simulate_metrics(&recs)
                }
            }
        })
        .collect();
    let mut w = csv::Writer::from_path(dir.join("sweep.csv")).map_err(LabError::from)?;
    let mut header_done = false;
    let mut failures = 0usize;
    for (job, res) in jobs.iter().zip(results) {
        let metrics = match res {
            Ok(m) => m,
            Err(e) => {
                eprintln!("sweep job {}: {e}", job.index);
                failures += 1;
                continue;
            }
        };
        if !header_done {
            let mut head = vec!["job".to_string()];
            head.extend(job.coords.iter().map(|(p, _)| p.clone()));
            head.extend(metrics.iter().map(|(k, _)| k.clone()));
            w.write_record(&head).map_err(LabError::from)?;
            header_done = true;
        }
        let mut row = vec![job.index.to_string()];
        row.extend(job.coords.iter().map(|(_, v)| csv_cell(v)));
        row.extend(metrics.iter().map(|(_, v)| v.to_string()));
        w.write_record(&row).map_err(LabError::from)?;
    }
    w.flush()?;
    write_run_manifest(ctx, &dir, "sweep")?;
    println!("sweep: {} job(s), {failures} failed, table at {}", jobs.len(), dir.join("sweep.csv").display());
    if failures > 0 {
        return Err(LabError::StepFailure { t: f64::NAN, reason: format!("{failures} sweep job(s) failed") }.into());
    }
    Ok(0)
}
