//! `anytime`: run time-uniform estimation experiments and export bound curves.
//!
//! Exit status: 0 when everything ran and every check passed, 1 when a check
//! failed, 2 on a usage or configuration error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anytime_core::bounds::{curve_rows, log_grid, sandwich_check, write_curves_csv};
use anytime_core::error::Error;
use anytime_core::estimators::DoublingWidth;
use anytime_core::families::FamilyTag;
use anytime_core::harness::{
    resolve_seed, run_coverage, run_inequality_suite, run_testing_game, write_json, EstimatorKind, ExperimentConfig,
    ExperimentKind, SamplingMode, SEED_ENV,
};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "anytime", version, about = "Time-uniform estimation experiments and lower-bound curves")]
#[command(subcommand_required = true, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coverage of the doubling estimator over many simulated paths.
    Coverage(ExperimentArgs),
    /// Sequential testing game derived from an estimator.
    Testgame(ExperimentArgs),
    /// Randomized checks of the divergence inequalities and family constants.
    Klcheck(KlcheckArgs),
    /// Export lower-bound curves and the doubling width as CSV.
    Curves(CurveArgs),
    /// Curves plus a check that the width sits above the log log bound within a ratio.
    Sandwich(SandwichArgs),
}

/// Flags shared by `coverage` and `testgame`. Unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Debug, Args)]
struct ExperimentArgs {
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target miscoverage [default: 0.1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Noise scale of the base family [default: 1].
    #[arg(long)]
    sigma: Option<f64>,
    /// Base family [default: gaussian].
    #[arg(long)]
    family: Option<FamilyTag>,
    /// Radius of the Cantor embedding [default: 1].
    #[arg(long)]
    r: Option<f64>,
    /// Left end of the Cantor embedding [default: 0].
    #[arg(long)]
    theta0: Option<f64>,
    /// Number of index bits, 1 to 12 [default: 6].
    #[arg(long)]
    depth: Option<usize>,
    /// Samples per path for coverage [default: 32768].
    #[arg(long)]
    horizon: Option<u64>,
    /// Replications [default: 2000].
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed [default: $ANYTIME_SEED, else 20240917].
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for summary.json and the CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Estimator for testgame: doubling or oracle [default: doubling].
    #[arg(long)]
    estimator: Option<EstimatorKind>,
    /// How testgame draws the doubling estimate: blocks or stream [default: blocks].
    #[arg(long)]
    sampling: Option<SamplingMode>,
}

#[derive(Debug, Args)]
struct KlcheckArgs {
    /// Random trials per check.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Master seed [default: $ANYTIME_SEED, else 20240917].
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Family whose curvature enters the lower bounds.
    #[arg(long, default_value_t = FamilyTag::Gaussian)]
    family: FamilyTag,
    #[arg(long = "n-min", default_value_t = 16)]
    n_min: u64,
    #[arg(long = "n-max", default_value_t = 1 << 20)]
    n_max: u64,
    /// Grid points, log-spaced between n-min and n-max.
    #[arg(long, default_value_t = 64)]
    points: usize,
    /// CSV file to write [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SandwichArgs {
    #[command(flatten)]
    curves: CurveArgs,
    /// Largest allowed width / lower-bound ratio.
    #[arg(long = "ratio-max", default_value_t = 20.0)]
    ratio_max: f64,
}

/// A run either finishes (with or without failed checks) or stops on a usage error.
type Outcome = Result<bool, Error>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Coverage(args) => coverage(args),
        Command::Testgame(args) => testgame(args),
        Command::Klcheck(args) => klcheck(args),
        Command::Curves(args) => curves(&args).map(|_| true),
        Command::Sandwich(args) => sandwich(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

fn build_config(args: ExperimentArgs, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let (mut cfg, file_seed) = match &args.config {
        Some(path) => {
            let (cfg, has_seed) = ExperimentConfig::from_path_with_seed_flag(path)?;
            let seed = has_seed.then_some(cfg.seed);
            (cfg, seed)
        }
        None => (ExperimentConfig::default(), None),
    };
    cfg.kind = kind;
    cfg.seed = resolve_seed(args.seed.or(file_seed), env_seed().as_deref())?;
    macro_rules! take {
        ($($field:ident),*) => {$( if let Some(value) = args.$field { cfg.$field = value; } )*};
    }
    take!(alpha, sigma, family, r, theta0, depth, horizon, reps, estimator, sampling);
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if args.out.is_some() {
        cfg.out = args.out;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    write_json(io::stdout().lock(), value)
}

fn coverage(args: ExperimentArgs) -> Outcome {
    let cfg = build_config(args, ExperimentKind::Coverage)?;
    let report = run_coverage(&cfg)?;
    eprintln!("coverage: {} replications in {:.2} s", report.replications, report.wall_clock_seconds);
    if let Some(dir) = &cfg.out {
        report.write_outputs(dir)?;
    }
    print_json(&report)?;
    let stderr = (cfg.alpha * (1.0 - cfg.alpha) / cfg.reps as f64).sqrt();
    let covered = report.coverage >= report.target - 3.0 * stderr;
    if !covered {
        eprintln!("coverage {} is below {} - 3 standard errors", report.coverage, report.target);
    }
    if report.soundness_violations > 0 {
        eprintln!("{} covered paths decoded a wrong bit", report.soundness_violations);
    }
    Ok(covered && report.soundness_violations == 0)
}

fn testgame(args: ExperimentArgs) -> Outcome {
    let cfg = build_config(args, ExperimentKind::Testgame)?;
    let report = run_testing_game(&cfg)?;
    if let Some(reason) = &report.truncation {
        eprintln!("schedule truncated at depth {}: {reason}", report.depth_played);
    }
    if let Some(dir) = &cfg.out {
        report.write_outputs(dir)?;
    }
    print_json(&report)?;
    if !report.within_budget {
        eprintln!(
            "summed conditional error {} exceeds budget {} + 2 x {}",
            report.total_cond_err, report.budget, report.total_cond_err_stderr
        );
    }
    Ok(report.within_budget)
}

fn klcheck(args: KlcheckArgs) -> Outcome {
    if args.trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let seed = resolve_seed(args.seed, env_seed().as_deref())?;
    let report = run_inequality_suite(args.trials, seed);
    if let Some(path) = &args.out {
        write_json(create(path)?, &report)?;
    }
    print_json(&report)?;
    for check in report.checks.iter().filter(|c| c.violations > 0) {
        eprintln!("{}: {} violations in {} trials", check.name, check.violations, check.trials);
    }
    Ok(report.passed)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn curvature(args: &CurveArgs) -> Result<f64, Error> {
    let cfg = ExperimentConfig {
        family: args.family,
        sigma: args.sigma,
        alpha: args.alpha,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    Ok(cfg.cantor_family()?.curvature())
}

fn curves(args: &CurveArgs) -> Result<Vec<u64>, Error> {
    let m = curvature(args)?;
    let width = DoublingWidth::sub_gaussian(args.alpha, args.sigma)?;
    let grid = log_grid(args.n_min, args.n_max, args.points)?;
    let rows = curve_rows(&grid, args.alpha, m, &width)?;
    match &args.out {
        Some(path) => write_curves_csv(create(path)?, &rows)?,
        None => write_curves_csv(io::stdout().lock(), &rows)?,
    }
    io::stdout().flush()?;
    Ok(grid)
}

fn sandwich(args: SandwichArgs) -> Outcome {
    let m = curvature(&args.curves)?;
    let grid = curves(&args.curves)?;
    let width = DoublingWidth::sub_gaussian(args.curves.alpha, args.curves.sigma)?;
    let report = sandwich_check(&grid, args.curves.alpha, m, &width, args.ratio_max)?;
    eprintln!(
        "width / lb_loglog over {} points: min {:.4}, max {:.4}, cap {}",
        report.points, report.min_ratio, report.max_ratio, report.ratio_cap
    );
    if !report.holds() {
        eprintln!("ratio outside [1, {}] at n = {:?}", report.ratio_cap, report.violations);
    }
    Ok(report.holds())
}
