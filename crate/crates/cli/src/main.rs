//! `hierspline` command-line front end.
//!
//! Exit codes: 0 success, 1 input or domain error, 2 numerical
//! non-convergence. Thread count follows `RAYON_NUM_THREADS`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "hierspline", version, about = "Hierarchical Bézier spline models on manifolds")]
struct Cli {
    /// Suppress progress lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one spline per subject of a dataset.
    Fit(FitArgs),
    /// Mean trajectory of subject splines.
    Mean(MeanArgs),
    /// Discrete geodesic between two splines.
    Geodesic(PairArgs),
    /// Spline-space distance between two splines.
    Distance(PairArgs),
    /// PGA scores of subject splines around a mean.
    Descriptors(DescriptorArgs),
    /// Synthetic dataset from a ground-truth spline.
    Synth(SynthArgs),
    /// Evaluate a spline at given times.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    pub dataset: PathBuf,
    /// Segment degrees, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub degrees: Vec<usize>,
    #[arg(long)]
    pub closed: bool,
    /// Gradient-norm tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Use sample times as spline parameters instead of rescaling to [0, L].
    #[arg(long)]
    pub identity_times: bool,
    /// Output directory for `<id>.json` splines and `fit_report.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MeanArgs {
    #[arg(required = true)]
    pub splines: Vec<PathBuf>,
    /// Time steps of the discrete geodesics.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Output directory for `mean.json` and `mean_result.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub max_sweeps: usize,
    /// Output file for the path (geodesic only).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DescriptorArgs {
    pub mean: PathBuf,
    #[arg(required = true)]
    pub subjects: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub samples_per_segment: usize,
    /// Scores CSV; eigenvalues go to `<stem>.eigenvalues.json` next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    pub ground_truth: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    /// Number of equidistant observation times covering [0, L].
    #[arg(long, default_value_t = 7, conflicts_with = "times")]
    pub samples: usize,
    /// Explicit observation times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub spline: PathBuf,
    /// Times, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required_unless_present = "grid")]
    pub t: Option<Vec<f64>>,
    /// Number of equidistant times covering [0, L].
    #[arg(long, conflicts_with = "t")]
    pub grid: Option<usize>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let progress = commands::Progress { quiet: cli.quiet };
    let result: Result<(), CliError> = match &cli.command {
        Command::Fit(a) => commands::fit(a, &progress),
        Command::Mean(a) => commands::mean(a, &progress),
        Command::Geodesic(a) => commands::geodesic(a, &progress),
        Command::Distance(a) => commands::distance(a),
        Command::Descriptors(a) => commands::descriptors(a, &progress),
        Command::Synth(a) => commands::synth(a, &progress),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
