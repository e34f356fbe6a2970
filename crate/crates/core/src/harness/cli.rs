//! Argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 on success, 1 on runtime or check failure, 2 on usage errors.

use std::ffi::OsString;
use std::fmt::Display;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use super::bench::{bench_run, mode_compare, BenchSettings, MethodTag, Problem, ProblemConfig};
use super::config::ConfigFile;
use super::fig2::{fig2_experiment, Execution, Fig2Record, DEFAULT_N_GRID, DEFAULT_TRIALS};
use super::output::{fmt_real, CsvSink};
use super::validate::{gamma_check, gf_check, validate_suite, HankelExponent, ValidationReport};
use crate::error::Error;
use crate::optimizer::VarianceMode;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_SEED: u64 = 0;

/// Keys accepted in a `--config` file.
pub const CONFIG_KEYS: [&str; 15] = [
    "seed",
    "out",
    "trials",
    "n",
    "problem",
    "method",
    "steps",
    "eta",
    "phi",
    "batch",
    "dim",
    "patterns",
    "noise",
    "record_every",
    "max_step",
];

#[derive(Debug, Parser)]
#[command(
    name = "varioeta",
    version,
    about = "Vario-eta experiments and validation suites"
)]
pub struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo trials per dataset size.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// key = value file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Variance of the mean of n uniforms against the asymptotic variance.
    Fig2(Fig2Args),
    /// Error trajectories of several methods on one problem.
    Bench(BenchArgs),
    /// Recursive against asymptotic vario-eta: final error and time per step.
    Compare(CompareArgs),
    /// Hankel-loop reciprocal gamma against reference values.
    GammaCheck(GammaCheckArgs),
    /// Series coefficients and ODE residuals of the variance generating function.
    GfCheck,
    /// Every validation suite.
    Validate,
}

#[derive(Debug, Args)]
pub struct Fig2Args {
    /// Dataset size, repeatable; defaults to the built-in grid.
    #[arg(long = "n", value_parser = parse_dataset_size)]
    pub n: Vec<u64>,
    /// Run trials on the calling thread only.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// quadratic, rosenbrock or least-squares.
    #[arg(long)]
    pub problem: Option<Problem>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Dataset size M.
    #[arg(long)]
    pub patterns: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimizerArgs {
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    /// Batch size N.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub max_step: Option<f64>,
    /// Add wall-clock columns; such output is not reproducible byte for byte.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// sgd, sgd-equivalent, varioeta-recursive or varioeta-asymptotic; repeatable.
    #[arg(long)]
    pub method: Vec<MethodTag>,
    #[arg(long)]
    pub record_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Args)]
pub struct GammaCheckArgs {
    /// Integrate (-t)^s instead of (-t)^(-s).
    #[arg(long)]
    pub printed_exponent: bool,
}

fn parse_dataset_size(raw: &str) -> Result<u64, String> {
    let n: u64 = raw.parse().map_err(|e| format!("{e}"))?;
    if n < 2 {
        return Err(format!("dataset size n must be >= 2, got {n}"));
    }
    Ok(n)
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::BatchExceedsDataset { .. }
            | Error::NonPositiveAsymptoticVariance { .. } => Self::Usage(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

fn io_failure(context: &str, path: Option<&Path>, e: io::Error) -> Failure {
    match path {
        Some(p) => Failure::Runtime(format!("{context} {}: {e}", p.display())),
        None => Failure::Runtime(format!("{context} standard output: {e}")),
    }
}

/// Command-line values over config-file values.
struct Resolver {
    file: ConfigFile,
}

impl Resolver {
    fn new(path: Option<&Path>) -> Result<Self, Failure> {
        let file = match path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        if let Some(k) = file.keys().find(|k| !CONFIG_KEYS.contains(k)) {
            return Err(Failure::Usage(format!("config: unknown key `{k}`")));
        }
        Ok(Self { file })
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.file.get(key)?),
        }
    }

    fn pick_list<T: FromStr>(&self, flags: Vec<T>, key: &str) -> Result<Vec<T>, Failure>
    where
        T::Err: Display,
    {
        if flags.is_empty() {
            Ok(self.file.get_list(key)?)
        } else {
            Ok(flags)
        }
    }
}

struct Globals {
    seed: u64,
    out: Option<PathBuf>,
    trials: Option<u64>,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    let resolver = Resolver::new(cli.config.as_deref())?;
    let globals = Globals {
        seed: resolver.pick(cli.seed, "seed")?.unwrap_or(DEFAULT_SEED),
        out: resolver.pick(cli.out, "out")?,
        trials: resolver.pick(cli.trials, "trials")?,
    };
    match cli.command {
        Command::Fig2(args) => fig2(&resolver, &globals, args),
        Command::Bench(args) => bench(&resolver, &globals, args),
        Command::Compare(args) => compare(&resolver, &globals, args),
        Command::GammaCheck(args) => {
            let exponent = if args.printed_exponent {
                HankelExponent::Printed
            } else {
                HankelExponent::Standard
            };
            report(&globals, gamma_check(exponent))
        }
        Command::GfCheck => report(&globals, gf_check()),
        Command::Validate => report(&globals, validate_suite(globals.seed)),
    }
}

fn open_sink(globals: &Globals, header: &[&str]) -> Result<CsvSink, Failure> {
    let path = globals.out.as_deref();
    CsvSink::create(path, header).map_err(|e| io_failure("cannot write", path, e))
}

fn write_rows<R>(globals: &Globals, mut sink: CsvSink, rows: R) -> Result<(), Failure>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let path = globals.out.as_deref();
    for row in rows {
        sink.row(row)
            .map_err(|e| io_failure("cannot write", path, e))?;
    }
    sink.finish()
        .map_err(|e| io_failure("cannot write", path, e))
}

fn fig2(resolver: &Resolver, globals: &Globals, args: Fig2Args) -> Result<i32, Failure> {
    let mut n_list = resolver.pick_list(args.n, "n")?;
    if n_list.is_empty() {
        n_list = DEFAULT_N_GRID.to_vec();
    }
    let trials = globals.trials.unwrap_or(DEFAULT_TRIALS);
    let execution = if args.serial {
        Execution::Serial
    } else {
        Execution::Parallel
    };
    // checked before the output is opened so a bad grid leaves no file behind
    if let Some(n) = n_list.iter().find(|&&n| n < 2) {
        return Err(Failure::Usage(format!(
            "dataset size n must be >= 2, got {n}"
        )));
    }
    let sink = open_sink(globals, &Fig2Record::HEADER)?;
    let records = fig2_experiment(&n_list, trials, globals.seed, execution)?;
    write_rows(
        globals,
        sink,
        records.iter().map(|r| r.csv_fields().to_vec()),
    )?;
    Ok(EXIT_SUCCESS)
}

fn problem_config(
    resolver: &Resolver,
    args: ProblemArgs,
    default: ProblemConfig,
) -> Result<ProblemConfig, Failure> {
    let problem = resolver
        .pick(args.problem, "problem")?
        .unwrap_or(default.problem);
    let base = if problem == default.problem {
        default
    } else {
        ProblemConfig::new(problem)
    };
    Ok(ProblemConfig {
        problem,
        dim: resolver.pick(args.dim, "dim")?.unwrap_or(base.dim),
        patterns: resolver
            .pick(args.patterns, "patterns")?
            .unwrap_or(base.patterns),
        noise: resolver.pick(args.noise, "noise")?.unwrap_or(base.noise),
    })
}

fn settings(
    resolver: &Resolver,
    globals: &Globals,
    args: &OptimizerArgs,
    default: BenchSettings,
) -> Result<BenchSettings, Failure> {
    Ok(BenchSettings {
        eta: resolver.pick(args.eta, "eta")?.unwrap_or(default.eta),
        phi: resolver.pick(args.phi, "phi")?.unwrap_or(default.phi),
        batch_size: resolver
            .pick(args.batch, "batch")?
            .unwrap_or(default.batch_size),
        max_step: resolver
            .pick(args.max_step, "max_step")?
            .or(default.max_step),
        steps: resolver.pick(args.steps, "steps")?.unwrap_or(default.steps),
        record_every: default.record_every,
        seed: globals.seed,
    })
}

fn bench(resolver: &Resolver, globals: &Globals, args: BenchArgs) -> Result<i32, Failure> {
    let problem = problem_config(
        resolver,
        args.problem,
        ProblemConfig::new(Problem::Quadratic),
    )?;
    let mut settings = settings(resolver, globals, &args.optimizer, BenchSettings::default())?;
    settings.record_every = resolver
        .pick(args.record_every, "record_every")?
        .unwrap_or(settings.record_every);
    let mut methods = resolver.pick_list(args.method, "method")?;
    if methods.is_empty() {
        methods = vec![MethodTag::Sgd, MethodTag::VarioEtaRecursive];
    }
    let timings = args.optimizer.timings;

    let mut header = vec!["method", "step", "error"];
    if timings {
        header.push("wall_time");
    }
    let sink = open_sink(globals, &header)?;
    let outcome = bench_run(&problem, &methods, &settings)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for (tag, step, reason) in &outcome.divergences {
        eprintln!(
            "warning: {} diverged at step {step}: {reason}",
            tag.as_str()
        );
    }
    let rows = outcome.records.iter().map(|r| {
        let mut row = vec![
            r.method.as_str().to_string(),
            r.step.to_string(),
            fmt_real(r.error),
        ];
        if timings {
            row.push(fmt_real(r.wall_time));
        }
        row
    });
    write_rows(globals, sink, rows)?;
    Ok(EXIT_SUCCESS)
}

/// Defaults for `compare`: a large least-squares problem with `N = 10^4`.
pub fn compare_defaults() -> (ProblemConfig, BenchSettings) {
    (
        ProblemConfig {
            problem: Problem::LeastSquares,
            dim: 10,
            patterns: 100_000,
            noise: 0.1,
        },
        BenchSettings {
            batch_size: 10_000,
            steps: 100,
            ..BenchSettings::default()
        },
    )
}

fn compare(resolver: &Resolver, globals: &Globals, args: CompareArgs) -> Result<i32, Failure> {
    let (problem_default, settings_default) = compare_defaults();
    let problem = problem_config(resolver, args.problem, problem_default)?;
    let settings = settings(resolver, globals, &args.optimizer, settings_default)?;
    let timings = args.optimizer.timings;

    let mut header = vec!["mode", "steps", "final_error", "batch_fingerprint"];
    if timings {
        header.extend(["update_seconds_per_step", "total_seconds_per_step"]);
    }
    let sink = open_sink(globals, &header)?;
    let summary = mode_compare(&problem, &settings)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    let mut rows = Vec::new();
    for s in [&summary.recursive, &summary.asymptotic] {
        let mode = match s.mode {
            VarianceMode::Recursive => "recursive",
            VarianceMode::Asymptotic => "asymptotic",
        };
        eprintln!(
            "{mode}: final error {:.6e}, update {:.3e} s/step, total {:.3e} s/step",
            s.final_error, s.update_seconds_per_step, s.total_seconds_per_step
        );
        let mut row = vec![
            mode.to_string(),
            s.steps_completed.to_string(),
            fmt_real(s.final_error),
            format!("{:016x}", s.batch_fingerprint),
        ];
        if timings {
            row.push(fmt_real(s.update_seconds_per_step));
            row.push(fmt_real(s.total_seconds_per_step));
        }
        rows.push(row);
    }
    eprintln!(
        "asymptotic update no slower than recursive: {}",
        if summary.asymptotic_not_slower() {
            "yes"
        } else {
            "no"
        }
    );
    write_rows(globals, sink, rows)?;
    Ok(EXIT_SUCCESS)
}

fn report(globals: &Globals, report: ValidationReport) -> Result<i32, Failure> {
    println!("{report}");
    if globals.out.is_some() {
        let sink = open_sink(globals, &["check", "status", "detail"])?;
        let rows = report
            .checks
            .iter()
            .map(|c| {
                let status = if c.passed { "pass" } else { "fail" };
                vec![c.name.clone(), status.to_string(), c.detail.clone()]
            })
            .chain(
                report
                    .notes
                    .iter()
                    .map(|n| vec!["note".to_string(), "info".to_string(), n.clone()]),
            );
        write_rows(globals, sink, rows)?;
    }
    Ok(if report.passed() {
        EXIT_SUCCESS
    } else {
        EXIT_FAILURE
    })
}
