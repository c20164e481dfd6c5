//! BIC-driven choice of the regularization scalar.
//!
//! The grid is anchored at `λ_sm`, the smallest `λ` whose estimate has no
//! edges. Synthetic data searches `[λ_sm/100, λ_sm]`; real data searches
//! `[λ_sm/160, λ_sm/4]`. Both use 10 log-spaced points by default.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphEstimate;
use crate::admm::Iterate;
use crate::lsp::{estimate_stages_observed, EstimatorSpec};
use crate::matrix::{log_det_pd, sample_covariance, trace_of_product, SampleCovariance, SampleMatrix};

pub const DEFAULT_GRID_POINTS: usize = 10;

/// Relative bracket width at which the `λ_sm` bisection stops.
pub const LAMBDA_SM_REL_WIDTH: f64 = 0.05;

/// The doubling search gives up above this multiple of `max |Σ̂_ij|`.
pub const LAMBDA_SM_CEILING_FACTOR: f64 = 1e6;

/// The downward search stops at this multiple of `max |Σ̂_ij|`.
pub const LAMBDA_SM_FLOOR_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeMode {
    Synthetic,
    Real,
}

impl RangeMode {
    /// `(lower, upper)` as fractions of `λ_sm`.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            RangeMode::Synthetic => (1.0 / 100.0, 1.0),
            RangeMode::Real => (1.0 / 160.0, 1.0 / 4.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RangeMode::Synthetic => "synthetic",
            RangeMode::Real => "real",
        }
    }
}

impl std::str::FromStr for RangeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(RangeMode::Synthetic),
            "real" => Ok(RangeMode::Real),
            other => Err(Error::Input(format!("unknown grid range '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub lambda_sm: f64,
    pub range_mode: RangeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub lambda: f64,
    pub bic: f64,
    pub edge_count: usize,
    /// One flag per outer iteration.
    pub converged: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub grid: LambdaGrid,
    pub records: Vec<SelectionRecord>,
    pub chosen_index: usize,
    pub chosen_lambda: f64,
    pub chosen: GraphEstimate,
}

/// `tr(Σ̂Ω̂) − ln|Ω̂| + (ln n / n)·|Ê|`.
pub fn bic(sigma: &SampleCovariance, omega_hat: &DMatrix<f64>, edge_count: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Input(format!("BIC needs n >= 2, got {n}")));
    }
    Ok(fit_term(sigma, omega_hat)? + complexity_term(edge_count, n))
}

/// The unpenalized part of [`bic`].
pub fn fit_term(sigma: &SampleCovariance, omega_hat: &DMatrix<f64>) -> Result<f64> {
    Ok(trace_of_product(sigma.matrix(), omega_hat) - log_det_pd(omega_hat)?)
}

pub fn complexity_term(edge_count: usize, n: usize) -> f64 {
    let n = n as f64;
    n.ln() / n * edge_count as f64
}

/// Smallest `λ` (to 5% relative precision) whose estimate has no edges.
///
/// Starts at `max |Σ̂_ij|` (off-diagonal). If that already gives an empty
/// graph the search halves downwards until edges appear, stopping at a floor
/// of `1e-6 · max |Σ̂_ij|` (all entries); otherwise it doubles upwards to a
/// ceiling of `1e6 · max |Σ̂_ij|`. The bracket is then bisected geometrically.
pub fn find_lambda_sm(sigma: &SampleCovariance, spec: &EstimatorSpec) -> Result<f64> {
    find_lambda_sm_observed(sigma, spec, &|_, _| {})
}

/// Per-inner-iteration callback shared across worker threads; receives the
/// 1-based outer index.
pub type SharedObserver<'a> = &'a (dyn Fn(usize, &Iterate<'_>) + Sync);

/// [`find_lambda_sm`] with every solver iterate passed to `observe`.
pub fn find_lambda_sm_observed(
    sigma: &SampleCovariance,
    spec: &EstimatorSpec,
    observe: SharedObserver<'_>,
) -> Result<f64> {
    let scale = sigma.matrix().amax();
    if !(scale > 0.0) {
        return Err(Error::Input("covariance is identically zero".to_string()));
    }
    let floor = LAMBDA_SM_FLOOR_FACTOR * scale;
    let ceiling = LAMBDA_SM_CEILING_FACTOR * scale;
    let no_edges = |lambda: f64| -> Result<bool> {
        let at = |e: Error| Error::AtLambda {
            lambda,
            source: Box::new(e),
        };
        let mut stages = estimate_stages_observed(sigma, &spec.with_lambda(lambda).map_err(at)?, observe)
            .map_err(at)?;
        let est = stages.pop().expect("at least one outer iteration");
        Ok(est.edges.is_empty())
    };

    let start = sigma.max_abs_off_diagonal().max(floor);
    let (mut lo, mut hi);
    if no_edges(start)? {
        hi = start;
        loop {
            lo = hi / 2.0;
            if lo < floor {
                return Ok(floor.min(hi));
            }
            if !no_edges(lo)? {
                break;
            }
            hi = lo;
        }
    } else {
        lo = start;
        loop {
            hi = lo * 2.0;
            if hi > ceiling {
                return Err(Error::SearchFailure { ceiling });
            }
            if no_edges(hi)? {
                break;
            }
            lo = hi;
        }
    }
    while hi / lo - 1.0 > LAMBDA_SM_REL_WIDTH {
        let mid = (lo * hi).sqrt();
        if no_edges(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn lambda_grid(lambda_sm: f64, range_mode: RangeMode) -> Result<LambdaGrid> {
    lambda_grid_with(lambda_sm, range_mode, DEFAULT_GRID_POINTS)
}

/// Log-spaced grid with exact endpoints, ascending.
pub fn lambda_grid_with(lambda_sm: f64, range_mode: RangeMode, points: usize) -> Result<LambdaGrid> {
    if !(lambda_sm > 0.0 && lambda_sm.is_finite()) {
        return Err(Error::Input(format!("lambda_sm must be positive, got {lambda_sm}")));
    }
    if points < 2 {
        return Err(Error::Config(format!("grid needs at least 2 points, got {points}")));
    }
    let (lf, uf) = range_mode.bounds();
    let (lo, hi) = (lambda_sm * lf, lambda_sm * uf);
    let ratio = (hi / lo).ln();
    let last = points - 1;
    let values = (0..points)
        .map(|k| match k {
            0 => lo,
            k if k == last => hi,
            k => lo * (ratio * k as f64 / last as f64).exp(),
        })
        .collect();
    Ok(LambdaGrid {
        values,
        lambda_sm,
        range_mode,
    })
}

pub fn select_lambda(x: &SampleMatrix, spec: &EstimatorSpec, range_mode: RangeMode) -> Result<SelectionReport> {
    select_lambda_with(x, spec, range_mode, DEFAULT_GRID_POINTS)
}

pub fn select_lambda_with(
    x: &SampleMatrix,
    spec: &EstimatorSpec,
    range_mode: RangeMode,
    points: usize,
) -> Result<SelectionReport> {
    let sigma = sample_covariance(x);
    select_on_covariance(&sigma, x.n(), spec, range_mode, points)
}

/// Selection from a precomputed covariance of `n` observations.
pub fn select_on_covariance(
    sigma: &SampleCovariance,
    n: usize,
    spec: &EstimatorSpec,
    range_mode: RangeMode,
    points: usize,
) -> Result<SelectionReport> {
    select_on_covariance_observed(sigma, n, spec, range_mode, points, &|_, _| {})
}

/// [`select_on_covariance`] with every solver iterate, including those of
/// the `λ_sm` search, passed to `observe`.
pub fn select_on_covariance_observed(
    sigma: &SampleCovariance,
    n: usize,
    spec: &EstimatorSpec,
    range_mode: RangeMode,
    points: usize,
    observe: SharedObserver<'_>,
) -> Result<SelectionReport> {
    let lambda_sm = find_lambda_sm_observed(sigma, spec, observe)?;
    let grid = lambda_grid_with(lambda_sm, range_mode, points)?;
    let fits: Vec<(SelectionRecord, GraphEstimate)> = grid
        .values
        .par_iter()
        .map(|&lambda| {
            let at = |e: Error| Error::AtLambda {
                lambda,
                source: Box::new(e),
            };
            let mut stages =
                estimate_stages_observed(sigma, &spec.with_lambda(lambda).map_err(at)?, observe)
                    .map_err(at)?;
            let est = stages.pop().expect("at least one outer iteration");
            let value = bic(sigma, &est.omega_hat, est.edges.len(), n).map_err(at)?;
            let record = SelectionRecord {
                lambda,
                bic: value,
                edge_count: est.edges.len(),
                converged: est.diagnostics.iter().map(|d| d.converged).collect(),
            };
            Ok((record, est))
        })
        .collect::<Result<_>>()?;

    // Ascending grid, strict comparison: ties keep the smallest lambda.
    let mut chosen_index = 0;
    for (k, (rec, _)) in fits.iter().enumerate() {
        if rec.bic < fits[chosen_index].0.bic {
            chosen_index = k;
        }
    }
    let (records, mut estimates): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    let chosen = estimates.swap_remove(chosen_index);
    Ok(SelectionReport {
        chosen_lambda: records[chosen_index].lambda,
        grid,
        records,
        chosen_index,
        chosen,
    })
}
