//! Command-line definitions. Every numeric flag accepts scientific notation,
//! counts included (`--n 2e3`).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lapgraph", version, about = "Sparse graph and Laplacian learning from Gaussian samples")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a graph at one regularization level.
    Estimate(EstimateArgs),
    /// Pick the regularization level by BIC over a grid.
    Select(SelectArgs),
    /// Draw a synthetic ground truth and samples from it.
    Synth(SynthArgs),
    /// Monte-Carlo benchmark over synthetic graphs.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Sample CSV: rows are observations, columns variables.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub output_dir: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, value_parser = parse_count)]
    pub threads: Option<usize>,
    /// Master seed. Estimation and selection are deterministic and ignore it.
    #[arg(long, value_parser = parse_seed)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Initial ADMM penalty [default: 2]
    #[arg(long, value_parser = parse_f64)]
    pub rho0: Option<f64>,
    /// Residual ratio that triggers a penalty change [default: 10]
    #[arg(long, value_parser = parse_f64)]
    pub mu: Option<f64>,
    /// [default: 1e-4]
    #[arg(long, value_parser = parse_f64)]
    pub tau_abs: Option<f64>,
    /// [default: 1e-4]
    #[arg(long, value_parser = parse_f64)]
    pub tau_rel: Option<f64>,
    /// Log-sum penalty offset [default: 1e-5]
    #[arg(long, value_parser = parse_f64)]
    pub epsilon: Option<f64>,
    /// Inner iteration cap [default: 500]
    #[arg(long, value_parser = parse_count)]
    pub max_inner: Option<usize>,
    /// Sign constraint on off-diagonal entries [default: nonpositive]
    #[arg(long, value_enum)]
    pub constraint: Option<ConstraintArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    Nonpositive,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Synthetic,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphArg {
    Chain,
    Er,
    Er2,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_parser = parse_f64)]
    pub lambda: f64,
    /// Outer reweighting passes; 1 is the plain constrained lasso.
    #[arg(long, value_parser = parse_count, default_value = "2")]
    pub outer: usize,
    /// Center and scale columns to unit variance first.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "synthetic")]
    pub grid: GridArg,
    #[arg(long, value_parser = parse_count, default_value = "10")]
    pub points: usize,
    #[arg(long, value_parser = parse_count, default_value = "2")]
    pub outer: usize,
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "chain")]
    pub graph: GraphArg,
    #[arg(long, value_parser = parse_count, default_value = "100")]
    pub p: usize,
    #[arg(long, value_parser = parse_count, default_value = "400")]
    pub n: usize,
    #[arg(long, value_parser = parse_f64, default_value = "0")]
    pub kappa: f64,
    #[arg(long, value_parser = parse_f64, default_value = "0.03")]
    pub p_er: f64,
}

/// Flags left unset fall back to the `--spec` file, then to defaults.
#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// `key = value` file; keys are the long flag names.
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    /// [default: chain]
    #[arg(long, value_enum)]
    pub graph: Option<GraphArg>,
    /// [default: 100]
    #[arg(long, value_parser = parse_count)]
    pub p: Option<usize>,
    /// [default: 400]
    #[arg(long, value_parser = parse_count)]
    pub n: Option<usize>,
    /// [default: 0]
    #[arg(long, value_parser = parse_f64)]
    pub kappa: Option<f64>,
    /// [default: 0.03]
    #[arg(long, value_parser = parse_f64)]
    pub p_er: Option<f64>,
    /// [default: 20]
    #[arg(long, value_parser = parse_count)]
    pub runs: Option<usize>,
    /// [default: 2]
    #[arg(long, value_parser = parse_count)]
    pub outer: Option<usize>,
    /// Comma-separated fixed values instead of a grid.
    #[arg(long, value_name = "LIST")]
    pub lambdas: Option<String>,
    /// Grid range relative to the smallest edge-free level [default: synthetic]
    #[arg(long, value_enum)]
    pub grid: Option<GridArg>,
    /// [default: 10]
    #[arg(long, value_parser = parse_count)]
    pub points: Option<usize>,
    /// Pick the level per run by BIC instead of reporting the whole grid.
    #[arg(long)]
    pub bic: bool,
    /// Check structural invariants on every iterate.
    #[arg(long)]
    pub audit: bool,
}

pub fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: {s:?}"))
    }
}

pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.trim().parse::<usize>() {
        return Ok(v);
    }
    let v = parse_f64(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= (1u64 << 53) as f64 {
        Ok(v as usize)
    } else {
        Err(format!("not a non-negative integer: {s:?}"))
    }
}

pub fn parse_seed(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    parse_count(s).map(|v| v as u64)
}
