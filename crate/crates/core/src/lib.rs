//! Sparse graph learning from multivariate samples under total-positivity
//! constraints.
//!
//! The estimator fits a precision matrix `Ω̂` with non-positive off-diagonal
//! entries by penalized maximum likelihood. An ADMM inner loop solves the
//! weighted-ℓ1 problem; an outer loop reweights the penalty to approximate
//! the log-sum penalty (constrained adaptive lasso). The graph is read off
//! the exact sparsity of the split variable `V`, with weights `Ŵ = −Ω̂⁻`
//! and Laplacian `L̂ = D̂ − Ŵ`.
//!
//! ```no_run
//! use lapgraph::{estimate, sample_covariance, EstimatorSpec, SampleMatrix};
//! # fn rows() -> Vec<Vec<f64>> { vec![] }
//! let x = SampleMatrix::from_rows(&rows())?;
//! let sigma = sample_covariance(&x);
//! let est = estimate(&sigma, &EstimatorSpec::adaptive(0.5)?)?;
//! for (i, j) in est.edges.iter() {
//!     println!("{i} -- {j}: {}", est.w_hat[(i, j)]);
//! }
//! # Ok::<(), lapgraph::Error>(())
//! ```

pub mod admm;
pub mod bench;
pub mod error;
pub mod graph;
pub mod lsp;
pub mod matrix;
pub mod select;
pub mod synth;

pub use admm::{solve_inner, InnerResult, PenaltyWeights, SignConstraint, SolverConfig};
pub use error::{Error, Result};
pub use graph::{EdgeSet, GraphEstimate, OuterRecord};
pub use lsp::{estimate, estimate_stages, lsp_objective, lsp_weights, EstimatorSpec, Mode};
pub use matrix::{sample_covariance, standardize, SampleCovariance, SampleMatrix};
pub use select::{select_lambda, LambdaGrid, RangeMode, SelectionReport};
pub use synth::{GraphKind, GroundTruthModel, MetricsReport, ScaleMode};
