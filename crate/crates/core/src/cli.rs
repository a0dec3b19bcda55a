//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a self-check criterion failed, 2 configuration or
//! usage error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

use crate::acceptance::{is_reference_problem, run_all, CheckInputs};
use crate::oracle::gold_rows;
use crate::pipeline::{
    curves_csv, eigenpairs_csv, load_or_build, resolve_cache_dir, solve, summary_table, write_file, RunError,
    SolveSettings, TableSource,
};
use crate::problem::Problem;
use crate::sampling::{CharacteristicSurface, RegularizerConfig, RegularizerKind, SamplingError, SurfaceId};
use crate::solver::{trace_curve, FindOptions, SearchBox, SolverError};

#[derive(Debug, Parser)]
#[command(name = "twoparam-sl", version, about = "Eigenpairs and eigencurves of two-parameter Sturm-Liouville problems")]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find eigenpairs in a box and write them as CSV.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Also report sampled roots that direct shooting could not confirm.
        #[arg(long)]
        keep_unconfirmed: bool,
    },
    /// Follow one eigencurve from a start point and write the polyline as CSV.
    Trace {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "B1")]
        surface: SurfaceId,
        /// Start point `mu1,mu2`.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        start: (f64, f64),
        #[arg(long, default_value_t = 0.05)]
        arc_step: f64,
    },
    /// Build (or load) the sample table at one x and write it to the cache.
    Table {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "x", default_value_t = 1.0)]
        x_eval: f64,
    },
    /// Run the self-check suite.
    Check {
        #[command(flatten)]
        run: RunArgs,
        /// Skip the checks tied to the Airy reference problem.
        #[arg(long)]
        skip_gold: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Problem file with `w1`, `w2`, `q` and `c` lines.
    pub problem: PathBuf,
    /// Lattice truncation: indices run over -N..=N.
    #[arg(long = "N", default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub n: u32,
    /// Regularizer power.
    #[arg(long, default_value_t = 5)]
    pub m: u32,
    /// `symmetric` (even in each parameter) or `directional`.
    #[arg(long, default_value_t = RegularizerKind::Symmetric)]
    pub regularizer: RegularizerKind,
    /// Search box `lo1:hi1:lo2:hi2`.
    #[arg(long = "box", default_value = "0:50:0:50", allow_hyphen_values = true)]
    pub search_box: String,
    /// Grid cells per side of the search box.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    /// Sample-table cache (default: $TWOPARAM_SL_CACHE, then ./.twoparam-sl-cache).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Output file (CSV goes to stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected mu1,mu2, got '{s}'"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number"));
    Ok((num(a)?, num(b)?))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0} check criteria failed")]
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Io { .. } | RunError::Csv { .. } => CliError::Usage(e.to_string()),
            RunError::Sampling(SamplingError::Regularizer { .. } | SamplingError::Truncation) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

struct Resolved {
    problem: Problem,
    regularizer: RegularizerConfig,
    search: SearchBox,
    cache_dir: PathBuf,
    out: Option<PathBuf>,
    n: usize,
}

fn resolve(run: &RunArgs) -> Result<Resolved, CliError> {
    let text = fs::read_to_string(&run.problem).map_err(|e| usage(format!("{}: {e}", run.problem.display())))?;
    let problem: Problem = text.parse().map_err(|e| usage(format!("{}: {e}", run.problem.display())))?;
    let regularizer = RegularizerConfig::new(run.m, run.regularizer).map_err(usage)?;
    let search = SearchBox::parse_ranges(&run.search_box, run.grid).map_err(usage)?;
    Ok(Resolved {
        problem,
        regularizer,
        search,
        cache_dir: resolve_cache_dir(run.cache_dir.as_deref()),
        out: run.out.clone(),
        n: run.n as usize,
    })
}

/// CSV to `out`, or to stdout when no path was given.
fn emit(out: Option<&Path>, csv: &str) -> Result<(), CliError> {
    match out {
        Some(path) => Ok(write_file(path, csv)?),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

/// Human-readable lines go to stdout when the CSV goes to a file, else to stderr.
fn report(to_file: bool, text: &str) {
    if to_file {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| usage(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Solve { run, keep_unconfirmed } => cmd_solve(&run, keep_unconfirmed),
        Command::Trace { run, surface, start, arc_step } => cmd_trace(&run, surface, start, arc_step),
        Command::Table { run, x_eval } => cmd_table(&run, x_eval),
        Command::Check { run, skip_gold } => cmd_check(&run, skip_gold),
    })
}

pub fn cmd_solve(run: &RunArgs, keep_unconfirmed: bool) -> Result<(), CliError> {
    let r = resolve(run)?;
    let settings = SolveSettings {
        n: r.n,
        regularizer: r.regularizer,
        search: r.search,
        find: FindOptions::default(),
        keep_unconfirmed,
        cache_dir: Some(r.cache_dir.clone()),
    };
    let outcome = solve(&r.problem, &settings)?;
    for d in &outcome.diagnostics {
        info!("{d}");
    }
    emit(r.out.as_deref(), &eigenpairs_csv(&outcome.pairs))?;
    let mut text = match outcome.searched {
        Some(b) => format!("searched {b}\n"),
        None => "search box lies outside the sample hulls; nothing searched\n".to_string(),
    };
    text.push_str(&format!(
        "{} eigenpair(s); {} sampled root(s), {} not confirmed by direct shooting\n",
        outcome.pairs.len(),
        outcome.sampled.len(),
        outcome.unconfirmed.len()
    ));
    if !outcome.pairs.is_empty() {
        text.push_str(&summary_table(&outcome.pairs));
    }
    report(r.out.is_some(), &text);
    Ok(())
}

pub fn cmd_trace(run: &RunArgs, surface: SurfaceId, start: (f64, f64), arc_step: f64) -> Result<(), CliError> {
    let r = resolve(run)?;
    let x_eval = match surface {
        SurfaceId::B1 => 1.0,
        SurfaceId::B2 => r.problem.c(),
    };
    let (table, _) = load_or_build(&r.problem, x_eval, r.n, r.regularizer, Some(&r.cache_dir))?;
    let search = r
        .search
        .clip(table.hull())
        .ok_or_else(|| usage(format!("search box {} lies outside the sample hull", r.search)))?;
    if search != r.search {
        warn!("search box clipped to {search}");
    }
    let s = CharacteristicSurface::regularized(Arc::new(table), surface);
    let trace = trace_curve(&s, start, arc_step, &search).map_err(|e| match e {
        SolverError::StartOffCurve { .. } => CliError::Numerical(e.to_string()),
        other => usage(other),
    })?;
    for d in &trace.diagnostics {
        info!("{d}");
    }
    emit(r.out.as_deref(), &curves_csv(&trace.segments))?;
    let shape = if trace.closed {
        "closed"
    } else if trace.exited {
        "open, leaves the box"
    } else {
        "open"
    };
    let points: usize = trace.segments.iter().map(|s| s.points.len()).sum();
    report(
        r.out.is_some(),
        &format!("{points} points in {} piece(s) on {surface} ({shape})\n", trace.segments.len()),
    );
    Ok(())
}

pub fn cmd_table(run: &RunArgs, x_eval: f64) -> Result<(), CliError> {
    if !(x_eval > 0.0 && x_eval <= 1.0) {
        return Err(usage(format!("--x must lie in (0, 1] (got {x_eval})")));
    }
    let r = resolve(run)?;
    let (table, source) = load_or_build(&r.problem, x_eval, r.n, r.regularizer, Some(&r.cache_dir))?;
    let (h1, h2) = table.spacing();
    let mut text = format!(
        "x = {x_eval}\nbeta1 = {}\nbeta2 = {}\nspacing = {h1}, {h2}\nentries = {}\nfingerprint = {}\n",
        table.beta1(),
        table.beta2(),
        table.samples().len(),
        table.fingerprint()
    );
    match source {
        TableSource::Built(stats) => text.push_str(&format!("built with {} IVP solves\n", stats.ivp_solves)),
        TableSource::Cache(path) => text.push_str(&format!("cache hit: {}, 0 IVP solves\n", path.display())),
    }
    if let Some(out) = &r.out {
        table.write_cache(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
        text.push_str(&format!("written to {}\n", out.display()));
    }
    print!("{text}");
    Ok(())
}

pub fn cmd_check(run: &RunArgs, skip_gold: bool) -> Result<(), CliError> {
    let r = resolve(run)?;
    if !skip_gold && !is_reference_problem(&r.problem) {
        return Err(usage(
            "the reference checks need the problem w1 = 1, w2 = x, q = 0, c = 0.7; pass --skip-gold for other problems",
        ));
    }
    let inputs = CheckInputs { gold: gold_rows(), cache_dir: Some(r.cache_dir), skip_gold };
    let outcomes = run_all(&r.problem, &inputs);
    for o in &outcomes {
        println!("{o}");
    }
    match outcomes.iter().filter(|o| !o.passed()).count() {
        0 => Ok(()),
        n => Err(CliError::CheckFailed(n)),
    }
}
