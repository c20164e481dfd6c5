use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use lapgraph::bench::{monte_carlo, BenchReport, BenchSpec, LambdaPlan};
use lapgraph::select::{bic, select_lambda_with};
use lapgraph::synth::rng_for_seed;
use lapgraph::{
    estimate, sample_covariance, standardize, EstimatorSpec, GraphEstimate, GraphKind, GroundTruthModel, Mode,
    RangeMode, SampleMatrix, SignConstraint, SolverConfig,
};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::args::{
    parse_count, parse_f64, parse_seed, BenchArgs, Cli, Command, CommonArgs, ConstraintArg, EstimateArgs, GraphArg,
    GridArg, SelectArgs, SolverArgs, SynthArgs,
};
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, read_samples, write_edges, write_matrix, write_names, write_text, SampleTable};

/// Bench runs below this success fraction make the command fail.
pub const MIN_SUCCESS_FRACTION: f64 = 0.9;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Estimate(a) => run_estimate(&a),
        Command::Select(a) => run_select(&a),
        Command::Synth(a) => run_synth(&a),
        Command::Bench(a) => run_bench(&a),
    }
}

/// Ordered `key: value` pairs written as both text and JSON.
#[derive(Debug, Default)]
struct Summary(Vec<(String, Value)>);

impl Summary {
    fn push(&mut self, key: &str, value: impl Into<Value>) {
        self.0.push((key.to_string(), value.into()));
    }

    fn text(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}: {s}\n"),
                other => format!("{k}: {other}\n"),
            })
            .collect()
    }

    fn json(&self) -> Value {
        Value::Object(self.0.iter().cloned().collect())
    }
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write_text(path, &text)
}

fn write_summary(dir: &Path, summary: &Summary) -> CliResult<()> {
    write_text(&dir.join("summary.txt"), &summary.text())?;
    write_json(&dir.join("summary.json"), &summary.json())
}

fn write_manifest(dir: &Path, command: &str, args: &[String], config: Value) -> CliResult<()> {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut argv = vec![command.to_string()];
    argv.extend_from_slice(args);
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "timestamp": timestamp,
        "args": argv,
        "config": config,
    });
    write_json(&dir.join("manifest.json"), &manifest)
}

fn configure_threads(common: &CommonArgs) -> CliResult<()> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".to_string()));
        }
        // Fails only if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

fn require_input(common: &CommonArgs) -> CliResult<&Path> {
    common
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("--input is required".to_string()))
}

fn solver_config(args: &SolverArgs, outer: usize) -> CliResult<SolverConfig> {
    if outer == 0 {
        return Err(CliError::Usage("--outer must be at least 1".to_string()));
    }
    let d = SolverConfig::default();
    let config = SolverConfig {
        lambda0: d.lambda0,
        rho0: args.rho0.unwrap_or(d.rho0),
        mu: args.mu.unwrap_or(d.mu),
        tau_abs: args.tau_abs.unwrap_or(d.tau_abs),
        tau_rel: args.tau_rel.unwrap_or(d.tau_rel),
        epsilon: args.epsilon.unwrap_or(d.epsilon),
        k_outer_max: outer,
        k_inner_max: args.max_inner.unwrap_or(d.k_inner_max),
        constraint: match args.constraint {
            Some(ConstraintArg::Free) => SignConstraint::Free,
            _ => SignConstraint::NonPositive,
        },
    };
    config.validate()?;
    Ok(config)
}

fn mode_for(outer: usize) -> Mode {
    if outer <= 1 {
        Mode::ConstrainedLasso
    } else {
        Mode::ConstrainedAdaptiveLasso
    }
}

fn solver_flags(c: &SolverConfig) -> Vec<String> {
    let constraint = match c.constraint {
        SignConstraint::NonPositive => "nonpositive",
        SignConstraint::Free => "free",
    };
    vec![
        "--rho0".into(),
        c.rho0.to_string(),
        "--mu".into(),
        c.mu.to_string(),
        "--tau-abs".into(),
        c.tau_abs.to_string(),
        "--tau-rel".into(),
        c.tau_rel.to_string(),
        "--epsilon".into(),
        c.epsilon.to_string(),
        "--max-inner".into(),
        c.k_inner_max.to_string(),
        "--constraint".into(),
        constraint.into(),
    ]
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn load_samples(path: &Path, standardized: bool) -> CliResult<(SampleTable, SampleMatrix)> {
    let table = read_samples(path)?;
    let x = if standardized {
        standardize(&table.samples)?
    } else {
        table.samples.clone()
    };
    Ok((table, x))
}

fn write_estimate(dir: &Path, est: &GraphEstimate, names: Option<&[String]>) -> CliResult<()> {
    write_matrix(&dir.join("omega.csv"), &est.omega_hat)?;
    write_matrix(&dir.join("weights.csv"), &est.w_hat)?;
    write_matrix(&dir.join("laplacian.csv"), &est.laplacian_hat)?;
    write_edges(&dir.join("edges.csv"), &est.edges, &est.w_hat)?;
    if let Some(names) = names {
        write_names(&dir.join("nodes.csv"), names)?;
    }
    Ok(())
}

fn push_diagnostics(summary: &mut Summary, est: &GraphEstimate) {
    let last = est.diagnostics.last();
    summary.push("edges", est.edges.len());
    summary.push(
        "inner_iterations",
        est.diagnostics.iter().map(|d| d.inner_iterations).collect::<Vec<_>>(),
    );
    summary.push("converged", est.diagnostics.iter().all(|d| d.converged));
    if let Some(last) = last {
        summary.push("objective", last.objective);
        summary.push("primal_residual", last.primal_residual);
        summary.push("dual_residual", last.dual_residual);
    }
}

fn run_estimate(a: &EstimateArgs) -> CliResult<()> {
    configure_threads(&a.common)?;
    let input = require_input(&a.common)?;
    let mut solver = solver_config(&a.solver, a.outer)?;
    solver.lambda0 = a.lambda;
    let spec = EstimatorSpec::new(a.lambda, mode_for(a.outer), solver.clone())?;
    let (table, x) = load_samples(input, a.standardize)?;
    let sigma = sample_covariance(&x);
    let est = estimate(&sigma, &spec)?;

    let dir = &a.common.output_dir;
    ensure_dir(dir)?;
    write_estimate(dir, &est, table.names.as_deref())?;

    let mut summary = Summary::default();
    summary.push("p", x.p());
    summary.push("n", x.n());
    summary.push("lambda", a.lambda);
    summary.push("mode", spec.mode().as_str());
    summary.push("outer", a.outer);
    summary.push("standardized", a.standardize);
    push_diagnostics(&mut summary, &est);
    summary.push(
        "bic",
        bic(&sigma, &est.omega_hat, est.edges.len(), x.n()).ok().map_or(Value::Null, Value::from),
    );
    write_summary(dir, &summary)?;

    let mut args = vec![
        "--input".into(),
        path_string(input),
        "--output-dir".into(),
        path_string(dir),
        "--lambda".into(),
        a.lambda.to_string(),
        "--outer".into(),
        a.outer.to_string(),
    ];
    args.extend(solver_flags(&solver));
    if a.standardize {
        args.push("--standardize".into());
    }
    let config = json!({
        "input": path_string(input),
        "lambda": a.lambda,
        "mode": spec.mode().as_str(),
        "standardize": a.standardize,
        "solver": spec.solver(),
        "threads": a.common.threads,
    });
    write_manifest(dir, "estimate", &args, config)
}

fn range_mode(g: GridArg) -> RangeMode {
    match g {
        GridArg::Synthetic => RangeMode::Synthetic,
        GridArg::Real => RangeMode::Real,
    }
}

fn grid_name(g: GridArg) -> &'static str {
    range_mode(g).as_str()
}

fn run_select(a: &SelectArgs) -> CliResult<()> {
    configure_threads(&a.common)?;
    let input = require_input(&a.common)?;
    let solver = solver_config(&a.solver, a.outer)?;
    let spec = EstimatorSpec::new(solver.lambda0, mode_for(a.outer), solver.clone())?;
    let (table, x) = load_samples(input, a.standardize)?;
    let report = select_lambda_with(&x, &spec, range_mode(a.grid), a.points)?;

    let dir = &a.common.output_dir;
    ensure_dir(dir)?;
    let mut csv = String::from("lambda,bic,edges,converged\n");
    for r in &report.records {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.lambda,
            r.bic,
            r.edge_count,
            r.converged.iter().all(|c| *c)
        ));
    }
    write_text(&dir.join("selection.csv"), &csv)?;
    write_estimate(dir, &report.chosen, table.names.as_deref())?;

    let mut summary = Summary::default();
    summary.push("p", x.p());
    summary.push("n", x.n());
    summary.push("mode", spec.mode().as_str());
    summary.push("outer", a.outer);
    summary.push("standardized", a.standardize);
    summary.push("grid", grid_name(a.grid));
    summary.push("points", a.points);
    summary.push("lambda_sm", report.grid.lambda_sm);
    summary.push("lambda", report.chosen_lambda);
    summary.push("chosen_index", report.chosen_index + 1);
    summary.push("bic", report.records[report.chosen_index].bic);
    push_diagnostics(&mut summary, &report.chosen);
    write_summary(dir, &summary)?;

    let mut args = vec![
        "--input".into(),
        path_string(input),
        "--output-dir".into(),
        path_string(dir),
        "--grid".into(),
        grid_name(a.grid).into(),
        "--points".into(),
        a.points.to_string(),
        "--outer".into(),
        a.outer.to_string(),
    ];
    args.extend(solver_flags(&solver));
    if a.standardize {
        args.push("--standardize".into());
    }
    let config = json!({
        "input": path_string(input),
        "grid": grid_name(a.grid),
        "points": a.points,
        "lambdas": report.grid.values,
        "mode": spec.mode().as_str(),
        "standardize": a.standardize,
        "solver": spec.solver(),
        "threads": a.common.threads,
    });
    write_manifest(dir, "select", &args, config)
}

fn graph_kind(g: GraphArg) -> GraphKind {
    match g {
        GraphArg::Chain => GraphKind::Chain,
        GraphArg::Er => GraphKind::Er,
        GraphArg::Er2 => GraphKind::TwoComponentEr,
    }
}

fn graph_name(g: GraphArg) -> &'static str {
    match g {
        GraphArg::Chain => "chain",
        GraphArg::Er => "er",
        GraphArg::Er2 => "er2",
    }
}

/// Uses the same stream as bench run 0 with master seed `--seed`, so a
/// bench run `r` is reproduced by `synth --seed <master + r>`.
fn run_synth(a: &SynthArgs) -> CliResult<()> {
    configure_threads(&a.common)?;
    let seed = a.common.seed.unwrap_or(0);
    if a.common.input.is_some() {
        return Err(CliError::Usage("synth takes no --input".to_string()));
    }
    if !(0.0..=1.0).contains(&a.p_er) {
        return Err(CliError::Usage(format!("--p-er must lie in [0, 1], got {}", a.p_er)));
    }
    if a.kappa < 0.0 {
        return Err(CliError::Usage(format!("--kappa must be non-negative, got {}", a.kappa)));
    }
    if a.p < 2 || a.n < 2 {
        return Err(CliError::Usage("--p and --n must be at least 2".to_string()));
    }
    let mut rng = rng_for_seed(seed);
    let model = GroundTruthModel::generate(graph_kind(a.graph), a.p, a.p_er, a.kappa, &mut rng)?;
    let x = model.sample(a.n, &mut rng)?;

    let dir = &a.common.output_dir;
    ensure_dir(dir)?;
    write_matrix(&dir.join("samples.csv"), x.data())?;
    write_matrix(&dir.join("omega0.csv"), &model.omega0)?;
    let weights: DMatrix<f64> = -model.omega0.clone();
    write_edges(&dir.join("truth_edges.csv"), &model.edges0, &weights)?;

    let mut summary = Summary::default();
    summary.push("graph", graph_name(a.graph));
    summary.push("p", a.p);
    summary.push("n", a.n);
    summary.push("kappa", a.kappa);
    summary.push("p_er", a.p_er);
    summary.push("seed", seed);
    summary.push("edges", model.edges0.len());
    summary.push("components", model.edges0.components());
    summary.push("min_eigenvalue", model.min_eigenvalue);
    write_summary(dir, &summary)?;

    let args = vec![
        "--output-dir".into(),
        path_string(dir),
        "--seed".into(),
        seed.to_string(),
        "--graph".into(),
        graph_name(a.graph).into(),
        "--p".into(),
        a.p.to_string(),
        "--n".into(),
        a.n.to_string(),
        "--kappa".into(),
        a.kappa.to_string(),
        "--p-er".into(),
        a.p_er.to_string(),
    ];
    let config = json!({
        "graph": graph_name(a.graph),
        "p": a.p,
        "n": a.n,
        "kappa": a.kappa,
        "p_er": a.p_er,
        "seed": seed,
        "min_eigenvalue": model.min_eigenvalue,
    });
    write_manifest(dir, "synth", &args, config)
}

/// Bench settings after merging the spec file and the flags.
#[derive(Debug, Clone, Default)]
struct BenchSettings {
    solver: SolverArgs,
    graph: Option<GraphArg>,
    p: Option<usize>,
    n: Option<usize>,
    kappa: Option<f64>,
    p_er: Option<f64>,
    runs: Option<usize>,
    outer: Option<usize>,
    lambdas: Option<Vec<f64>>,
    grid: Option<GridArg>,
    points: Option<usize>,
    bic: Option<bool>,
    audit: Option<bool>,
    seed: Option<u64>,
    threads: Option<usize>,
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_f64).collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("not a boolean: {other:?}")),
    }
}

fn parse_enum<T: ValueEnum>(s: &str) -> Result<T, String> {
    T::from_str(s.trim(), true)
}

/// `key = value` lines; `#` starts a comment. Keys may use `-` or `_`.
fn read_spec_file(path: &Path) -> CliResult<BenchSettings> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut seen = BTreeMap::new();
    let mut s = BenchSettings::default();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::parse(path, format!("line {line_no}: expected key = value")))?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        if let Some(first) = seen.insert(key.clone(), line_no) {
            return Err(CliError::parse(
                path,
                format!("line {line_no}: {key} already set on line {first}"),
            ));
        }
        let bad = |m: String| CliError::parse(path, format!("line {line_no}: {key}: {m}"));
        match key.as_str() {
            "graph" => s.graph = Some(parse_enum(value).map_err(bad)?),
            "p" => s.p = Some(parse_count(value).map_err(bad)?),
            "n" => s.n = Some(parse_count(value).map_err(bad)?),
            "kappa" => s.kappa = Some(parse_f64(value).map_err(bad)?),
            "p_er" => s.p_er = Some(parse_f64(value).map_err(bad)?),
            "runs" => s.runs = Some(parse_count(value).map_err(bad)?),
            "outer" => s.outer = Some(parse_count(value).map_err(bad)?),
            "lambdas" => s.lambdas = Some(parse_list(value).map_err(bad)?),
            "grid" => s.grid = Some(parse_enum(value).map_err(bad)?),
            "points" => s.points = Some(parse_count(value).map_err(bad)?),
            "bic" => s.bic = Some(parse_bool(value).map_err(bad)?),
            "audit" => s.audit = Some(parse_bool(value).map_err(bad)?),
            "seed" => s.seed = Some(parse_seed(value).map_err(bad)?),
            "threads" => s.threads = Some(parse_count(value).map_err(bad)?),
            "rho0" => s.solver.rho0 = Some(parse_f64(value).map_err(bad)?),
            "mu" => s.solver.mu = Some(parse_f64(value).map_err(bad)?),
            "tau_abs" => s.solver.tau_abs = Some(parse_f64(value).map_err(bad)?),
            "tau_rel" => s.solver.tau_rel = Some(parse_f64(value).map_err(bad)?),
            "epsilon" => s.solver.epsilon = Some(parse_f64(value).map_err(bad)?),
            "max_inner" => s.solver.max_inner = Some(parse_count(value).map_err(bad)?),
            "constraint" => s.solver.constraint = Some(parse_enum(value).map_err(bad)?),
            _ => return Err(CliError::parse(path, format!("line {line_no}: unknown key {key:?}"))),
        }
    }
    Ok(s)
}

fn merge_flags(mut s: BenchSettings, a: &BenchArgs) -> CliResult<BenchSettings> {
    macro_rules! over {
        ($($field:ident).+ <- $value:expr) => {
            if let Some(v) = $value {
                s.$($field).+ = Some(v);
            }
        };
    }
    over!(solver.rho0 <- a.solver.rho0);
    over!(solver.mu <- a.solver.mu);
    over!(solver.tau_abs <- a.solver.tau_abs);
    over!(solver.tau_rel <- a.solver.tau_rel);
    over!(solver.epsilon <- a.solver.epsilon);
    over!(solver.max_inner <- a.solver.max_inner);
    over!(solver.constraint <- a.solver.constraint);
    over!(graph <- a.graph);
    over!(p <- a.p);
    over!(n <- a.n);
    over!(kappa <- a.kappa);
    over!(p_er <- a.p_er);
    over!(runs <- a.runs);
    over!(outer <- a.outer);
    over!(grid <- a.grid);
    over!(points <- a.points);
    over!(seed <- a.common.seed);
    over!(threads <- a.common.threads);
    if let Some(list) = &a.lambdas {
        s.lambdas = Some(parse_list(list).map_err(|m| CliError::Usage(format!("--lambdas: {m}")))?);
    }
    if a.bic {
        s.bic = Some(true);
    }
    if a.audit {
        s.audit = Some(true);
    }
    Ok(s)
}

fn bench_spec(s: &BenchSettings) -> CliResult<BenchSpec> {
    let graph = s.graph.unwrap_or(GraphArg::Chain);
    let outer = s.outer.unwrap_or(2);
    let mut spec = BenchSpec::new(graph_kind(graph), s.p.unwrap_or(100), s.n.unwrap_or(400), s.runs.unwrap_or(20));
    if let Some(p_er) = s.p_er {
        spec.p_er = p_er;
    }
    spec.kappa = s.kappa.unwrap_or(0.0);
    spec.master_seed = s.seed.unwrap_or(0);
    spec.solver = solver_config(&s.solver, outer)?;
    spec.mode = mode_for(outer);
    spec.audit = s.audit.unwrap_or(false);
    let range = range_mode(s.grid.unwrap_or(GridArg::Synthetic));
    let points = s.points.unwrap_or(lapgraph::select::DEFAULT_GRID_POINTS);
    spec.lambdas = match (&s.lambdas, s.bic.unwrap_or(false)) {
        (Some(_), true) => return Err(CliError::Usage("lambdas and bic are mutually exclusive".to_string())),
        (Some(values), false) => LambdaPlan::Fixed(values.clone()),
        (None, true) => LambdaPlan::Bic { range, points },
        (None, false) => LambdaPlan::Grid { range, points },
    };
    spec.validate()?;
    Ok(spec)
}

fn bench_args(spec: &BenchSpec, s: &BenchSettings, dir: &Path) -> Vec<String> {
    let graph = s.graph.unwrap_or(GraphArg::Chain);
    let mut args = vec![
        "--output-dir".into(),
        path_string(dir),
        "--seed".into(),
        spec.master_seed.to_string(),
        "--graph".into(),
        graph_name(graph).into(),
        "--p".into(),
        spec.p.to_string(),
        "--n".into(),
        spec.n.to_string(),
        "--kappa".into(),
        spec.kappa.to_string(),
        "--p-er".into(),
        spec.p_er.to_string(),
        "--runs".into(),
        spec.runs.to_string(),
        "--outer".into(),
        spec.solver.k_outer_max.to_string(),
    ];
    match &spec.lambdas {
        LambdaPlan::Fixed(values) => {
            let list: Vec<String> = values.iter().map(f64::to_string).collect();
            args.extend(["--lambdas".into(), list.join(",")]);
        }
        LambdaPlan::Grid { range, points } | LambdaPlan::Bic { range, points } => {
            args.extend(["--grid".into(), range.as_str().into(), "--points".into(), points.to_string()]);
            if matches!(spec.lambdas, LambdaPlan::Bic { .. }) {
                args.push("--bic".into());
            }
        }
    }
    args.extend(solver_flags(&spec.solver));
    if spec.audit {
        args.push("--audit".into());
    }
    args
}

fn bench_json(report: &BenchReport) -> Value {
    json!({
        "spec": report.spec,
        "lambdas": report.lambdas,
        "pilot_lambda_sm": report.pilot_lambda_sm,
        "runs_succeeded": report.succeeded(),
        "success_fraction": report.success_fraction(),
        "best_lambda": report.best_by_f1().map(|b| b.lambda.to_string()),
        "stats": report.stats,
        "run_seconds": report.records.iter().map(|r| json!({"run": r.run, "seconds": r.seconds})).collect::<Vec<_>>(),
        "failures": report.failures,
        "audit": report.audit,
    })
}

fn run_bench(a: &BenchArgs) -> CliResult<()> {
    if a.common.input.is_some() {
        return Err(CliError::Usage("bench takes no --input".to_string()));
    }
    let from_file = match &a.spec {
        Some(path) => read_spec_file(path)?,
        None => BenchSettings::default(),
    };
    let settings = merge_flags(from_file, a)?;
    let common = CommonArgs {
        threads: settings.threads,
        ..a.common.clone()
    };
    configure_threads(&common)?;
    let spec = bench_spec(&settings)?;
    let report = monte_carlo(&spec)?;

    let dir: &PathBuf = &a.common.output_dir;
    ensure_dir(dir)?;
    write_text(&dir.join("bench.csv"), &report.to_csv())?;
    write_text(&dir.join("summary.txt"), &report.summary())?;
    write_json(&dir.join("summary.json"), &bench_json(&report))?;
    let config = json!({ "spec": spec, "threads": settings.threads });
    write_manifest(dir, "bench", &bench_args(&spec, &settings, dir), config)?;

    if report.success_fraction() < MIN_SUCCESS_FRACTION {
        return Err(CliError::PartialBench {
            succeeded: report.succeeded(),
            runs: spec.runs,
        });
    }
    Ok(())
}
