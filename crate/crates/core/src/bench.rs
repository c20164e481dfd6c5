//! Monte-Carlo harness over synthetic ground truths.
//!
//! Run `r` draws its graph, weights and samples from a ChaCha8 stream seeded
//! with `master_seed + r`, so any run can be replayed on its own. Runs execute
//! in parallel and are collected by index; aggregates are computed in run
//! order and do not depend on the worker count.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{Iterate, SignConstraint, SolverConfig};
use crate::error::{Error, Result};
use crate::graph::GraphEstimate;
use crate::lsp::{estimate_stages_observed, EstimatorSpec, Mode};
use crate::matrix::{sample_covariance, SampleCovariance};
use crate::select::{
    find_lambda_sm, lambda_grid_with, select_on_covariance_observed, RangeMode, DEFAULT_GRID_POINTS,
};
use crate::synth::{evaluate, rng_for_seed, GraphKind, GroundTruthModel, ScaleMode};

/// Per-(run, λ) metrics, in CSV order.
pub const METRICS: [&str; 7] = [
    "f1",
    "precision",
    "recall",
    "frob_error",
    "frob_error_ls",
    "edges",
    "converged",
];

/// Extra metric reported under BIC selection.
pub const SELECTED_LAMBDA: &str = "selected_lambda";

/// Row-sum tolerance for `L̂` in the audit.
pub const LAPLACIAN_ROW_SUM_TOL: f64 = 1e-12;

/// Slack for the outer-loop descent check in the audit.
pub const MM_DESCENT_SLACK: f64 = 1e-6;

/// Which regularization values each run evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaPlan {
    /// The same explicit values for every run.
    Fixed(Vec<f64>),
    /// A log grid anchored at `λ_sm` of the first run's data, shared by all
    /// runs.
    Grid { range: RangeMode, points: usize },
    /// Per-run BIC selection over that run's own grid.
    Bic { range: RangeMode, points: usize },
}

impl LambdaPlan {
    pub fn grid(range: RangeMode) -> Self {
        LambdaPlan::Grid {
            range,
            points: DEFAULT_GRID_POINTS,
        }
    }

    pub fn bic(range: RangeMode) -> Self {
        LambdaPlan::Bic {
            range,
            points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub graph: GraphKind,
    pub p: usize,
    pub p_er: f64,
    pub n: usize,
    pub kappa: f64,
    pub runs: usize,
    pub lambdas: LambdaPlan,
    pub mode: Mode,
    pub master_seed: u64,
    pub solver: SolverConfig,
    /// Check structural invariants on every iterate and estimate.
    pub audit: bool,
}

impl BenchSpec {
    /// Adaptive-lasso bench with default solver settings on a shared grid.
    pub fn new(graph: GraphKind, p: usize, n: usize, runs: usize) -> Self {
        Self {
            graph,
            p,
            p_er: 0.03,
            n,
            kappa: 0.0,
            runs,
            lambdas: LambdaPlan::grid(RangeMode::Synthetic),
            mode: Mode::ConstrainedAdaptiveLasso,
            master_seed: 0,
            solver: SolverConfig::default(),
            audit: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::Config("runs must be at least 1".to_string()));
        }
        if self.p < 2 {
            return Err(Error::Config(format!("p must be at least 2, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(0.0..=1.0).contains(&self.p_er) {
            return Err(Error::Config(format!("p_er must lie in [0, 1], got {}", self.p_er)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        match &self.lambdas {
            LambdaPlan::Fixed(values) => {
                if values.is_empty() {
                    return Err(Error::Config("no lambda values given".to_string()));
                }
                if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(Error::Config(format!("lambda must be positive, got {v}")));
                }
            }
            LambdaPlan::Grid { points, .. } | LambdaPlan::Bic { points, .. } => {
                if *points < 2 {
                    return Err(Error::Config(format!("grid needs at least 2 points, got {points}")));
                }
            }
        }
        self.solver.validate()
    }

    fn estimator(&self, lambda: f64) -> Result<EstimatorSpec> {
        EstimatorSpec::new(lambda, self.mode, self.solver.clone())
    }

    /// Ground truth and sample covariance of run `run`.
    pub fn draw(&self, run: usize) -> Result<(GroundTruthModel, SampleCovariance)> {
        let mut rng = rng_for_seed(self.master_seed.wrapping_add(run as u64));
        let model = GroundTruthModel::generate(self.graph, self.p, self.p_er, self.kappa, &mut rng)?;
        let x = model.sample(self.n, &mut rng)?;
        Ok((model, sample_covariance(&x)))
    }
}

/// Where a row of aggregates comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaKey {
    Value(f64),
    /// Per-run BIC choice.
    Selected,
}

impl std::fmt::Display for LambdaKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaKey::Value(v) => write!(f, "{v}"),
            LambdaKey::Selected => f.write_str("bic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricStat {
    pub name: &'static str,
    pub mean: f64,
    /// Population standard deviation (divisor = runs).
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaStats {
    pub lambda: LambdaKey,
    pub metrics: Vec<MetricStat>,
}

impl LambdaStats {
    pub fn get(&self, name: &str) -> Option<&MetricStat> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn mean(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |m| m.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub message: String,
}

/// Counters for the structural invariants. Every field except the
/// `*_checked` totals should be zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub iterates_checked: u64,
    pub non_pd_iterates: u64,
    /// Iterates with a positive off-diagonal entry in `V`.
    pub positive_v_iterates: u64,
    pub estimates_checked: u64,
    pub laplacian_row_sum_violations: u64,
    pub negative_weight_estimates: u64,
    /// Estimates where `{Ŵ_ij > 0}` differs from `Ê`.
    pub weight_support_mismatches: u64,
    pub outer_steps_checked: u64,
    pub mm_descent_violations: u64,
}

impl AuditSummary {
    pub fn violations(&self) -> u64 {
        self.non_pd_iterates
            + self.positive_v_iterates
            + self.laplacian_row_sum_violations
            + self.negative_weight_estimates
            + self.weight_support_mismatches
            + self.mm_descent_violations
    }

    pub fn merge(&mut self, other: &AuditSummary) {
        self.iterates_checked += other.iterates_checked;
        self.non_pd_iterates += other.non_pd_iterates;
        self.positive_v_iterates += other.positive_v_iterates;
        self.estimates_checked += other.estimates_checked;
        self.laplacian_row_sum_violations += other.laplacian_row_sum_violations;
        self.negative_weight_estimates += other.negative_weight_estimates;
        self.weight_support_mismatches += other.weight_support_mismatches;
        self.outer_steps_checked += other.outer_steps_checked;
        self.mm_descent_violations += other.mm_descent_violations;
    }
}

/// Thread-safe invariant checker fed by solver callbacks.
///
/// The sign of `V` and the support of `Ŵ` are only checked under the
/// non-positive constraint; the two-sided ablation breaks both by design.
#[derive(Debug, Default)]
pub struct Auditor {
    check_sign: bool,
    iterates_checked: AtomicU64,
    non_pd_iterates: AtomicU64,
    positive_v_iterates: AtomicU64,
    estimates_checked: AtomicU64,
    laplacian_row_sum_violations: AtomicU64,
    negative_weight_estimates: AtomicU64,
    weight_support_mismatches: AtomicU64,
    outer_steps_checked: AtomicU64,
    mm_descent_violations: AtomicU64,
}

fn bump(counter: &AtomicU64, hit: bool) {
    if hit {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

impl Auditor {
    pub fn new(constraint: SignConstraint) -> Self {
        Self {
            check_sign: constraint == SignConstraint::NonPositive,
            ..Self::default()
        }
    }

    pub fn observe_iterate(&self, it: &Iterate<'_>) {
        self.iterates_checked.fetch_add(1, Ordering::Relaxed);
        bump(&self.non_pd_iterates, Cholesky::new(it.omega.clone()).is_none());
        if self.check_sign {
            let p = it.v.nrows();
            let positive = (0..p).any(|j| (0..p).any(|i| i != j && it.v[(i, j)] > 0.0));
            bump(&self.positive_v_iterates, positive);
        }
    }

    /// Checks `L̂`, `Ŵ` and, for the final stage, outer-loop descent.
    pub fn observe_estimate(&self, est: &GraphEstimate) {
        self.estimates_checked.fetch_add(1, Ordering::Relaxed);
        let (w, l) = (&est.w_hat, &est.laplacian_hat);
        let p = w.nrows();
        let row_sums_ok = (0..p).all(|i| l.row(i).sum().abs() <= LAPLACIAN_ROW_SUM_TOL);
        bump(&self.laplacian_row_sum_violations, !row_sums_ok);
        bump(&self.negative_weight_estimates, w.iter().any(|&x| x < 0.0));
        if self.check_sign {
            let support_ok = (0..p).all(|j| {
                (0..p).all(|i| i == j || (w[(i, j)] > 0.0) == est.edges.contains(i, j))
            });
            bump(&self.weight_support_mismatches, !support_ok);
        }
        for step in est.diagnostics.windows(2) {
            self.outer_steps_checked.fetch_add(1, Ordering::Relaxed);
            bump(
                &self.mm_descent_violations,
                step[1].objective > step[0].objective + MM_DESCENT_SLACK,
            );
        }
    }

    pub fn summary(&self) -> AuditSummary {
        let g = |c: &AtomicU64| c.load(Ordering::Relaxed);
        AuditSummary {
            iterates_checked: g(&self.iterates_checked),
            non_pd_iterates: g(&self.non_pd_iterates),
            positive_v_iterates: g(&self.positive_v_iterates),
            estimates_checked: g(&self.estimates_checked),
            laplacian_row_sum_violations: g(&self.laplacian_row_sum_violations),
            negative_weight_estimates: g(&self.negative_weight_estimates),
            weight_support_mismatches: g(&self.weight_support_mismatches),
            outer_steps_checked: g(&self.outer_steps_checked),
            mm_descent_violations: g(&self.mm_descent_violations),
        }
    }
}

/// Metrics of one run: one row per evaluated λ, values in [`METRICS`]
/// order (plus the selected λ under BIC).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub rows: Vec<Vec<f64>>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub spec: BenchSpec,
    /// Shared λ values; empty under BIC.
    pub lambdas: Vec<f64>,
    /// `λ_sm` of the pilot run for a shared grid.
    pub pilot_lambda_sm: Option<f64>,
    pub stats: Vec<LambdaStats>,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub audit: Option<AuditSummary>,
}

impl BenchReport {
    pub fn succeeded(&self) -> usize {
        self.records.len()
    }

    pub fn success_fraction(&self) -> f64 {
        self.succeeded() as f64 / self.spec.runs as f64
    }

    /// Row with the highest mean F1; ties go to the smallest λ.
    pub fn best_by_f1(&self) -> Option<&LambdaStats> {
        let mut best: Option<&LambdaStats> = None;
        for row in &self.stats {
            let f1 = row.mean("f1");
            if f1.is_nan() {
                continue;
            }
            if best.is_none_or(|b| f1 > b.mean("f1")) {
                best = Some(row);
            }
        }
        best
    }

    /// `lambda,metric,mean,std,runs`, one line per λ and metric. Numbers use
    /// shortest round-trip formatting, so equal results give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,metric,mean,std,runs\n");
        for row in &self.stats {
            for m in &row.metrics {
                let _ = writeln!(out, "{},{},{},{},{}", row.lambda, m.name, m.mean, m.std, m.runs);
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let _ = writeln!(out, "graph: {}", s.graph.as_str());
        let _ = writeln!(out, "p: {}", s.p);
        let _ = writeln!(out, "n: {}", s.n);
        let _ = writeln!(out, "kappa: {}", s.kappa);
        if s.graph != GraphKind::Chain {
            let _ = writeln!(out, "p_er: {}", s.p_er);
        }
        let _ = writeln!(out, "mode: {}", s.mode.as_str());
        let _ = writeln!(out, "master_seed: {}", s.master_seed);
        let _ = writeln!(out, "runs: {}", s.runs);
        let _ = writeln!(out, "runs_succeeded: {}", self.succeeded());
        if let Some(sm) = self.pilot_lambda_sm {
            let _ = writeln!(out, "pilot_lambda_sm: {sm}");
        }
        if let Some(best) = self.best_by_f1() {
            let _ = writeln!(out, "best_lambda: {}", best.lambda);
            for m in &best.metrics {
                let _ = writeln!(out, "best_{}: {} +- {}", m.name, m.mean, m.std);
            }
        }
        if !self.records.is_empty() {
            let secs: f64 = self.records.iter().map(|r| r.seconds).sum();
            let _ = writeln!(out, "mean_seconds_per_run: {:.3}", secs / self.records.len() as f64);
        }
        for f in &self.failures {
            let _ = writeln!(out, "failed_run_{}: {}", f.run, f.message);
        }
        if let Some(a) = &self.audit {
            let _ = writeln!(out, "audit_iterates_checked: {}", a.iterates_checked);
            let _ = writeln!(out, "audit_estimates_checked: {}", a.estimates_checked);
            let _ = writeln!(out, "audit_violations: {}", a.violations());
        }
        out
    }
}

fn metric_row(est: &GraphEstimate, truth: &GroundTruthModel) -> Result<Vec<f64>> {
    let off = est.masked_off_diagonal();
    let fixed = evaluate(&est.edges, &off, truth, ScaleMode::FixedOne)?;
    let ls = evaluate(&est.edges, &off, truth, ScaleMode::LeastSquares)?;
    let converged = est.diagnostics.iter().all(|d| d.converged);
    Ok(vec![
        fixed.f1,
        fixed.precision,
        fixed.recall,
        fixed.frob_error,
        ls.frob_error,
        est.edges.len() as f64,
        if converged { 1.0 } else { 0.0 },
    ])
}

fn run_one(
    spec: &BenchSpec,
    run: usize,
    lambdas: &[f64],
    auditor: Option<&Auditor>,
) -> Result<Vec<Vec<f64>>> {
    let (truth, sigma) = spec.draw(run)?;
    let observe = |_: usize, it: &Iterate<'_>| {
        if let Some(a) = auditor {
            a.observe_iterate(it);
        }
    };
    let check = |est: &GraphEstimate| {
        if let Some(a) = auditor {
            a.observe_estimate(est);
        }
    };
    match &spec.lambdas {
        LambdaPlan::Bic { range, points } => {
            let report = select_on_covariance_observed(
                &sigma,
                spec.n,
                &spec.estimator(1.0)?,
                *range,
                *points,
                &observe,
            )?;
            check(&report.chosen);
            let mut row = metric_row(&report.chosen, &truth)?;
            row.push(report.chosen_lambda);
            Ok(vec![row])
        }
        _ => lambdas
            .iter()
            .map(|&lambda| {
                let mut stages =
                    estimate_stages_observed(&sigma, &spec.estimator(lambda)?, observe)?;
                let est = stages.pop().expect("at least one outer iteration");
                check(&est);
                metric_row(&est, &truth)
            })
            .collect(),
    }
}

fn aggregate(names: &[&'static str], keys: &[LambdaKey], records: &[RunRecord]) -> Vec<LambdaStats> {
    keys.iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let metrics = names
                .iter()
                .enumerate()
                .map(|(m, &name)| {
                    let values: Vec<f64> = records.iter().map(|r| r.rows[k][m]).collect();
                    let runs = values.len();
                    let (mean, std) = if runs == 0 {
                        (f64::NAN, f64::NAN)
                    } else {
                        let mean = values.iter().sum::<f64>() / runs as f64;
                        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / runs as f64;
                        (mean, var.sqrt())
                    };
                    MetricStat {
                        name,
                        mean,
                        std,
                        runs,
                    }
                })
                .collect();
            LambdaStats { lambda, metrics }
        })
        .collect()
}

type Outcome = (usize, f64, Result<Vec<Vec<f64>>>);

fn split_outcomes(outcomes: Vec<Outcome>) -> (Vec<RunRecord>, Vec<RunFailure>) {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (run, seconds, result) in outcomes {
        match result {
            Ok(rows) => records.push(RunRecord { run, rows, seconds }),
            Err(e) => failures.push(RunFailure {
                run,
                message: e.to_string(),
            }),
        }
    }
    (records, failures)
}

/// The shared λ values for a plan; runs the pilot `λ_sm` search for a grid.
pub fn resolve_lambdas(spec: &BenchSpec) -> Result<(Vec<f64>, Option<f64>)> {
    match &spec.lambdas {
        LambdaPlan::Fixed(values) => Ok((values.clone(), None)),
        LambdaPlan::Grid { range, points } => {
            let (_, sigma) = spec.draw(0)?;
            let lambda_sm = find_lambda_sm(&sigma, &spec.estimator(1.0)?)?;
            let grid = lambda_grid_with(lambda_sm, *range, *points)?;
            Ok((grid.values, Some(lambda_sm)))
        }
        LambdaPlan::Bic { .. } => Ok((Vec::new(), None)),
    }
}

/// Runs the bench. Failed runs are recorded in the report and left out of
/// the aggregates; only an invalid spec or a failed pilot search is an error.
pub fn monte_carlo(spec: &BenchSpec) -> Result<BenchReport> {
    spec.validate()?;
    let (lambdas, pilot_lambda_sm) = resolve_lambdas(spec)?;
    let auditor = spec.audit.then(|| Auditor::new(spec.solver.constraint));

    let outcomes: Vec<Outcome> = (0..spec.runs)
        .into_par_iter()
        .map(|run| {
            let start = Instant::now();
            let result = run_one(spec, run, &lambdas, auditor.as_ref());
            (run, start.elapsed().as_secs_f64(), result)
        })
        .collect();

    let (records, failures) = split_outcomes(outcomes);

    let mut names: Vec<&'static str> = METRICS.to_vec();
    let keys: Vec<LambdaKey> = if matches!(spec.lambdas, LambdaPlan::Bic { .. }) {
        names.push(SELECTED_LAMBDA);
        vec![LambdaKey::Selected]
    } else {
        lambdas.iter().map(|&v| LambdaKey::Value(v)).collect()
    };
    Ok(BenchReport {
        spec: spec.clone(),
        stats: aggregate(&names, &keys, &records),
        lambdas,
        pilot_lambda_sm,
        records,
        failures,
        audit: auditor.map(|a| a.summary()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(plan: LambdaPlan) -> BenchSpec {
        BenchSpec {
            lambdas: plan,
            ..BenchSpec::new(GraphKind::Chain, 8, 300, 3)
        }
    }

    #[test]
    fn validate_rejects_bad_specs() {
        let ok = small(LambdaPlan::Fixed(vec![0.1]));
        assert!(ok.validate().is_ok());
        assert!(BenchSpec { runs: 0, ..ok.clone() }.validate().is_err());
        assert!(BenchSpec { p: 1, ..ok.clone() }.validate().is_err());
        assert!(BenchSpec { p_er: 1.5, ..ok.clone() }.validate().is_err());
        assert!(BenchSpec { kappa: -1.0, ..ok.clone() }.validate().is_err());
        assert!(small(LambdaPlan::Fixed(vec![])).validate().is_err());
        assert!(small(LambdaPlan::Fixed(vec![0.0])).validate().is_err());
        assert!(small(LambdaPlan::Grid { range: RangeMode::Synthetic, points: 1 }).validate().is_err());
    }

    #[test]
    fn population_std() {
        let records: Vec<RunRecord> = [1.0, 3.0]
            .iter()
            .enumerate()
            .map(|(run, &x)| RunRecord {
                run,
                rows: vec![vec![x]],
                seconds: 0.0,
            })
            .collect();
        let stats = aggregate(&["f1"], &[LambdaKey::Value(0.5)], &records);
        let m = stats[0].metrics[0];
        assert_eq!((m.mean, m.std, m.runs), (2.0, 1.0, 2));
    }

    #[test]
    fn single_run_is_reproducible() {
        let spec = BenchSpec {
            runs: 1,
            master_seed: 17,
            ..small(LambdaPlan::Fixed(vec![0.05, 0.2]))
        };
        let a = monte_carlo(&spec).unwrap();
        let b = monte_carlo(&spec).unwrap();
        assert_eq!(a.records[0].rows, b.records[0].rows);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn run_seed_is_master_plus_index() {
        let spec = BenchSpec {
            master_seed: 40,
            ..small(LambdaPlan::Fixed(vec![0.1]))
        };
        let shifted = BenchSpec {
            master_seed: 42,
            runs: 1,
            ..spec.clone()
        };
        let all = monte_carlo(&spec).unwrap();
        let one = monte_carlo(&shifted).unwrap();
        assert_eq!(all.records[2].rows, one.records[0].rows);
    }

    #[test]
    fn csv_layout() {
        let report = monte_carlo(&small(LambdaPlan::Fixed(vec![0.05, 0.2]))).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "lambda,metric,mean,std,runs");
        assert_eq!(lines.len(), 1 + 2 * METRICS.len());
        assert!(lines[1].starts_with("0.05,f1,"));
        assert!(lines[1].ends_with(",3"));
    }

    #[test]
    fn best_by_f1_prefers_smallest_lambda_on_ties() {
        let row = |lambda: f64, f1: f64| LambdaStats {
            lambda: LambdaKey::Value(lambda),
            metrics: vec![MetricStat {
                name: "f1",
                mean: f1,
                std: 0.0,
                runs: 1,
            }],
        };
        let mut report = monte_carlo(&small(LambdaPlan::Fixed(vec![0.1]))).unwrap();
        report.stats = vec![row(0.1, 0.5), row(0.2, 0.9), row(0.3, 0.9), row(0.4, 0.2)];
        assert_eq!(report.best_by_f1().unwrap().lambda, LambdaKey::Value(0.2));
    }

    #[test]
    fn failed_runs_are_excluded_and_counted() {
        let outcomes = vec![
            (0, 0.1, Ok(vec![vec![1.0]])),
            (1, 0.1, Err(Error::Divergence { iteration: 7 })),
            (2, 0.1, Ok(vec![vec![0.0]])),
        ];
        let (records, failures) = split_outcomes(outcomes);
        assert_eq!(records.iter().map(|r| r.run).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].run, 1);
        assert!(failures[0].message.contains("iteration 7"));
        let stats = aggregate(&["f1"], &[LambdaKey::Value(0.1)], &records);
        assert_eq!(stats[0].metrics[0].runs, 2);
        assert_eq!(stats[0].metrics[0].mean, 0.5);
    }

    #[test]
    fn invalid_solver_settings_are_rejected_up_front() {
        let spec = BenchSpec {
            solver: SolverConfig {
                mu: 0.5,
                ..SolverConfig::default()
            },
            ..small(LambdaPlan::Fixed(vec![0.1]))
        };
        assert!(matches!(monte_carlo(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn bic_plan_reports_selected_lambda() {
        let spec = BenchSpec {
            runs: 2,
            audit: true,
            ..small(LambdaPlan::bic(RangeMode::Synthetic))
        };
        let report = monte_carlo(&spec).unwrap();
        assert_eq!(report.stats.len(), 1);
        assert_eq!(report.stats[0].lambda, LambdaKey::Selected);
        assert!(report.stats[0].mean(SELECTED_LAMBDA) > 0.0);
        assert!(report.to_csv().lines().nth(1).unwrap().starts_with("bic,f1,"));
        let audit = report.audit.unwrap();
        assert!(audit.iterates_checked > 0);
        assert_eq!(audit.violations(), 0);
    }

    #[test]
    fn grid_plan_uses_pilot_lambda_sm() {
        let spec = BenchSpec {
            runs: 2,
            ..small(LambdaPlan::grid(RangeMode::Synthetic))
        };
        let report = monte_carlo(&spec).unwrap();
        let sm = report.pilot_lambda_sm.unwrap();
        assert_eq!(report.lambdas.len(), DEFAULT_GRID_POINTS);
        assert_eq!(*report.lambdas.last().unwrap(), sm);
        assert_eq!(report.stats.len(), DEFAULT_GRID_POINTS);
    }
}
