//! The `rmtmean` command line: estimators, means, learners, experiments and
//! the gradient check behind one binary.
//!
//! Exit codes: 0 on success, 2 on invalid input (bad flags, unreadable or
//! malformed files, shape mismatches), 1 on runtime failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmtmean::InitialStep;

pub use config::parse_config;

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<rmtmean::Error> for Failure {
    fn from(e: rmtmean::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rmtmean", version, about = "Corrected Fisher-distance estimators and means of SPD matrices")]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    /// File of `key=value` lines used as defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate one covariance matrix from a p×n data CSV (columns are samples).
    EstimateCov(EstimateCovArgs),
    /// Fréchet mean of several data sets.
    Mean(MeanArgs),
    /// Nearest-centroid classification.
    #[command(subcommand)]
    NearestCentroid(NcCommand),
    /// Unsupervised clustering of data sets.
    Kmeans(KmeansArgs),
    /// Monte-Carlo accuracy of the mean estimators on synthetic clusters.
    BenchMean(BenchMeanArgs),
    /// Monte-Carlo accuracy of the covariance estimators.
    BenchCov(BenchCovArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct DescentArgs {
    /// Stop once the squared step length drops below this.
    #[arg(long, default_value_t = 1e-6, value_parser = positive_f64)]
    pub eps: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// First trial step of each linesearch: unit, inverse-grad-norm or adaptive.
    #[arg(long, default_value = "adaptive", value_parser = parse_step_rule)]
    pub step_rule: InitialStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovMethodArg {
    Scm,
    Lw,
    Rmt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovInitArg {
    Identity,
    Lw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeanMethodArg {
    ClassicalScm,
    ClassicalLw,
    Rmt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeanInitArg {
    Identity,
    LwMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectArg {
    Max,
    Min,
}

#[derive(Debug, Args)]
pub struct EstimateCovArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = CovMethodArg::Rmt)]
    pub method: CovMethodArg,
    #[arg(long, value_enum, default_value_t = CovInitArg::Lw)]
    pub init: CovInitArg,
    /// Validity guard level; 0 disables it.
    #[arg(long, default_value_t = 10.0, value_parser = nonneg_f64)]
    pub alpha: f64,
    #[command(flatten)]
    pub descent: DescentArgs,
    /// Subtract the sample mean first (n−1 normalisation).
    #[arg(long)]
    pub center: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-iteration CSV of the descent.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeanArgs {
    /// Directory of data CSVs, or a manifest listing them.
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long, value_enum, default_value_t = MeanMethodArg::Rmt)]
    pub method: MeanMethodArg,
    #[arg(long, value_enum, default_value_t = MeanInitArg::Identity)]
    pub init: MeanInitArg,
    #[arg(long, default_value_t = 0.0, value_parser = nonneg_f64)]
    pub alpha: f64,
    #[command(flatten)]
    pub descent: DescentArgs,
    #[arg(long)]
    pub center: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum NcCommand {
    /// Fit one centroid per class from a `label,path` manifest.
    Fit(NcFitArgs),
    /// Assign each listed data set to its nearest centroid.
    Predict(NcPredictArgs),
}

#[derive(Debug, Args)]
pub struct NcFitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, value_enum, default_value_t = MeanMethodArg::Rmt)]
    pub method: MeanMethodArg,
    #[arg(long, value_enum, default_value_t = MeanInitArg::Identity)]
    pub init: MeanInitArg,
    #[command(flatten)]
    pub descent: DescentArgs,
    /// Directory the model is written to.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct NcPredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub inputs: PathBuf,
    /// CSV of `path,label`; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KmeansArgs {
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub clusters: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub restarts: u64,
    /// Which restart to keep by its inertia.
    #[arg(long, value_enum, default_value_t = SelectArg::Max)]
    pub restart_select: SelectArg,
    /// Stop once at most this fraction of labels changes.
    #[arg(long, default_value_t = 0.0, value_parser = unit_f64)]
    pub label_tol: f64,
    /// Assignment/update rounds per restart.
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[command(flatten)]
    pub descent: DescentArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchMeanArgs {
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: u64,
    /// Samples per matrix to sweep: `a:b` doubles from a to b, `a,b,c` lists.
    #[arg(long, value_parser = grid_arg, conflicts_with = "k_grid", required_unless_present = "k_grid")]
    pub n_grid: Option<Grid>,
    /// Matrix counts to sweep, same syntax as --n-grid.
    #[arg(long, value_parser = grid_arg)]
    pub k_grid: Option<Grid>,
    /// Samples per matrix during a --k-grid sweep.
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    /// Matrices per trial during an --n-grid sweep.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0.1, value_parser = nonneg_f64)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 100.0, value_parser = condition_number)]
    pub condition: f64,
    #[command(flatten)]
    pub descent: DescentArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchCovArgs {
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: u64,
    #[arg(long, value_parser = grid_arg)]
    pub n_grid: Grid,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 100.0, value_parser = condition_number)]
    pub condition: f64,
    #[arg(long, value_enum, default_value_t = CovInitArg::Lw)]
    pub init: CovInitArg,
    #[arg(long, default_value_t = 10.0, value_parser = nonneg_f64)]
    pub alpha: f64,
    #[command(flatten)]
    pub descent: DescentArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Single dimension to check; all of 2, 4, 8, 16 when omitted.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: Option<u64>,
    /// Samples per SCM; 4p when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// Random instances per dimension.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub directions: u64,
    /// Exit with status 1 when the worst relative error exceeds this.
    #[arg(long, default_value_t = 1e-4, value_parser = positive_f64)]
    pub tol: f64,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|x| if x > 0.0 { Ok(x) } else { Err("must be positive".into()) })
}

fn nonneg_f64(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|x| if x >= 0.0 { Ok(x) } else { Err("must be non-negative".into()) })
}

fn unit_f64(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|x| if (0.0..=1.0).contains(&x) { Ok(x) } else { Err("must lie in [0, 1]".into()) })
}

fn condition_number(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|x| if x >= 1.0 { Ok(x) } else { Err("must be at least 1".into()) })
}

fn parse_step_rule(s: &str) -> Result<InitialStep, String> {
    s.parse().map_err(|e: rmtmean::Error| e.to_string())
}

/// Grid of sweep values, parsed by [`parse_grid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid(pub Vec<usize>);

fn grid_arg(s: &str) -> Result<Grid, String> {
    parse_grid(s).map(Grid)
}

/// `a:b` is `a, 2a, 4a, …` up to `b`; otherwise a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
    let grid = if let Some((a, b)) = s.split_once(':') {
        let (a, b) = (num(a)?, num(b)?);
        if a == 0 || a > b {
            return Err(format!("range '{s}' needs 0 < start <= end"));
        }
        std::iter::successors(Some(a), |&x| x.checked_mul(2)).take_while(|&x| x <= b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() || grid.contains(&0) {
        return Err(format!("grid '{s}' must list positive values"));
    }
    Ok(grid)
}

/// Command line recorded in output headers, minus `--threads` so that
/// outputs do not depend on the thread count.
fn flag_record(argv: &[String]) -> String {
    let mut kept = Vec::new();
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--threads" {
            it.next();
        } else if !a.starts_with("--threads=") {
            kept.push(a.as_str());
        }
    }
    kept.join(" ")
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr as a single line.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("error: invalid arguments");
            eprintln!("{line}");
            return 2;
        }
    };
    let header = format!("rmtmean {} seed={} flags: {}", env!("CARGO_PKG_VERSION"), cli.seed, flag_record(&argv));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0) as usize).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: --threads: {e}");
            return 1;
        }
    };
    match pool.install(|| commands::dispatch(&cli, &header)) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("rmtmean").chain(args.iter().copied()))
    }

    #[test]
    fn every_subcommand_parses() {
        let cases: [&[&str]; 8] = [
            &["estimate-cov", "--input", "x.csv", "--method", "lw", "--center", "--step-rule", "unit"],
            &["mean", "--inputs", "d", "--method", "classical-lw", "--init", "lw-mean"],
            &["nearest-centroid", "fit", "--train", "m.txt", "--model", "out"],
            &["nearest-centroid", "predict", "--model", "out", "--inputs", "m.txt"],
            &["kmeans", "--inputs", "d", "--clusters", "3", "--restart-select", "min"],
            &["bench-mean", "--k-grid", "2:64", "--n", "32", "--seed", "7"],
            &["bench-cov", "--n-grid", "32,64", "--threads", "2"],
            &["gradcheck", "--p", "8", "--n", "32", "--trials", "10"],
        ];
        for c in cases {
            parse(c).unwrap_or_else(|e| panic!("{c:?}: {e}"));
        }
        let cli = parse(&["--seed", "3", "bench-mean", "--n-grid", "32:128"]).unwrap();
        assert_eq!(cli.seed, 3);
        let Command::BenchMean(b) = cli.command else { panic!() };
        assert_eq!(b.n_grid, Some(Grid(vec![32, 64, 128])));
        assert_eq!(b.k_grid, None);
    }

    #[test]
    fn later_flags_override_earlier_ones() {
        let cli = parse(&["gradcheck", "--trials", "5", "--trials", "2"]).unwrap();
        let Command::Gradcheck(g) = cli.command else { panic!() };
        assert_eq!(g.trials, 2);
    }

    #[test]
    fn bad_values_are_rejected() {
        for c in [
            &["bench-mean", "--k-grid", "2:64", "--n-grid", "4"][..],
            &["bench-mean"],
            &["gradcheck", "--trials", "0"],
            &["estimate-cov", "--input", "x", "--eps", "-1"],
            &["estimate-cov", "--input", "x", "--step-rule", "huge"],
            &["kmeans", "--inputs", "d", "--clusters", "2", "--label-tol", "2"],
            &["bench-cov", "--n-grid", "4", "--condition", "0.5"],
        ] {
            assert!(parse(c).is_err(), "{c:?}");
        }
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("2:64").unwrap(), vec![2, 4, 8, 16, 32, 64]);
        assert_eq!(parse_grid("32:100").unwrap(), vec![32, 64]);
        assert_eq!(parse_grid("3, 5,9").unwrap(), vec![3, 5, 9]);
        assert_eq!(parse_grid("7").unwrap(), vec![7]);
        assert!(parse_grid("0:4").is_err());
        assert!(parse_grid("8:4").is_err());
        assert!(parse_grid("1,x").is_err());
        assert!(parse_grid("1,0").is_err());
    }

    #[test]
    fn threads_are_left_out_of_the_record() {
        let a: Vec<String> = ["rmtmean", "--threads", "4", "bench-cov", "--threads=2", "--p", "4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(flag_record(&a), "bench-cov --p 4");
    }
}
