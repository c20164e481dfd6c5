//! Ground-truth Laplacian precision models, Gaussian sampling, and the
//! edge-recovery / weight-error metrics.
//!
//! All randomness flows through a caller-supplied RNG; the benchmark
//! harness uses [`rng_for_seed`] (ChaCha8) so results are reproducible
//! across platforms. Normal variates come from `rand_distr::StandardNormal`
//! (ziggurat).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::EdgeSet;
use crate::matrix::{pinv_sqrt_factor, SampleMatrix, PINV_RANK_TOL};

/// Edge weights of the ground-truth Laplacian are drawn from `U[0.1, 0.3]`.
pub const WEIGHT_RANGE: (f64, f64) = (0.1, 0.3);

/// The pinned benchmark RNG.
pub type BenchRng = ChaCha8Rng;

pub fn rng_for_seed(seed: u64) -> BenchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Chain,
    /// Erdős–Rényi with isolated-node repair.
    Er,
    /// Two independent Erdős–Rényi blocks of `p/2` nodes each.
    TwoComponentEr,
}

impl GraphKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Chain => "chain",
            GraphKind::Er => "er",
            GraphKind::TwoComponentEr => "er2",
        }
    }
}

impl std::str::FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(GraphKind::Chain),
            "er" => Ok(GraphKind::Er),
            "er2" | "two-component-er" => Ok(GraphKind::TwoComponentEr),
            other => Err(Error::Input(format!("unknown graph kind '{other}'"))),
        }
    }
}

/// A generated ground truth: Laplacian, shift, edges and sampling factor.
#[derive(Debug, Clone)]
pub struct GroundTruthModel {
    pub omega0: DMatrix<f64>,
    pub kappa: f64,
    pub edges0: EdgeSet,
    /// `ΦΦᵀ = (Ω0 + κI)†`.
    pub sampler_factor: DMatrix<f64>,
    /// Smallest eigenvalue of `Ω0 + κI`.
    pub min_eigenvalue: f64,
}

impl GroundTruthModel {
    pub fn generate<R: Rng + ?Sized>(
        kind: GraphKind,
        p: usize,
        p_er: f64,
        kappa: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let edges0 = match kind {
            GraphKind::Chain => chain_graph(p)?,
            GraphKind::Er => er_graph(p, p_er, rng)?,
            GraphKind::TwoComponentEr => two_component_er_graph(p, p_er, rng)?,
        };
        let omega0 = laplacian_precision(&edges0, rng);
        let (omega_true, sampler_factor) = shift_and_factor(&omega0, kappa)?;
        let min_eigenvalue = crate::matrix::sym_eigendecompose(&omega_true)?.d[0];
        Ok(Self {
            omega0,
            kappa,
            edges0,
            sampler_factor,
            min_eigenvalue,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleMatrix> {
        sample_gaussian(&self.sampler_factor, n, rng)
    }
}

pub fn chain_graph(p: usize) -> Result<EdgeSet> {
    if p < 2 {
        return Err(Error::Input(format!("chain graph needs p >= 2, got {p}")));
    }
    EdgeSet::from_pairs(p, (0..p - 1).map(|i| (i, i + 1)))
}

/// `G(p, p_er)` followed by isolated-node repair: in ascending index order,
/// every node still of degree 0 is joined to a uniformly chosen other node.
pub fn er_graph<R: Rng + ?Sized>(p: usize, p_er: f64, rng: &mut R) -> Result<EdgeSet> {
    if p < 2 {
        return Err(Error::Input(format!("ER graph needs p >= 2, got {p}")));
    }
    if !(0.0..=1.0).contains(&p_er) {
        return Err(Error::Input(format!("edge probability {p_er} outside [0, 1]")));
    }
    let mut edges = EdgeSet::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random::<f64>() < p_er {
                edges.insert(i, j)?;
            }
        }
    }
    let mut degree = edges.degrees();
    for i in 0..p {
        if degree[i] == 0 {
            let mut j = rng.random_range(0..p - 1);
            if j >= i {
                j += 1;
            }
            edges.insert(i, j)?;
            degree[i] += 1;
            degree[j] += 1;
        }
    }
    Ok(edges)
}

/// Two independent [`er_graph`] blocks on nodes `0..p/2` and `p/2..p`.
pub fn two_component_er_graph<R: Rng + ?Sized>(p: usize, p_er: f64, rng: &mut R) -> Result<EdgeSet> {
    if p < 4 {
        return Err(Error::Input(format!(
            "two-component graph needs p >= 4, got {p}"
        )));
    }
    let first = p / 2;
    let a = er_graph(first, p_er, rng)?;
    let b = er_graph(p - first, p_er, rng)?;
    EdgeSet::from_pairs(p, a.iter().chain(b.iter().map(|(i, j)| (i + first, j + first))))
}

/// Combinatorial Laplacian with `U[0.1, 0.3]` weights on `edges`, drawn in
/// ascending edge order.
pub fn laplacian_precision<R: Rng + ?Sized>(edges: &EdgeSet, rng: &mut R) -> DMatrix<f64> {
    let p = edges.p();
    let dist = Uniform::new_inclusive(-WEIGHT_RANGE.1, -WEIGHT_RANGE.0).expect("valid range");
    let mut omega = DMatrix::zeros(p, p);
    for (i, j) in edges.iter() {
        let w: f64 = rng.sample(dist);
        omega[(i, j)] = w;
        omega[(j, i)] = w;
    }
    for i in 0..p {
        let s: f64 = (0..p).filter(|&j| j != i).map(|j| omega[(i, j)]).sum();
        omega[(i, i)] = -s;
    }
    omega
}

/// `(Ω0 + κI, Φ)` with `ΦΦᵀ = (Ω0 + κI)†`.
pub fn shift_and_factor(omega0: &DMatrix<f64>, kappa: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Input(format!("kappa must be >= 0, got {kappa}")));
    }
    let p = omega0.nrows();
    let omega_true = omega0 + DMatrix::<f64>::identity(p, p) * kappa;
    let phi = pinv_sqrt_factor(&omega_true, PINV_RANK_TOL)?;
    Ok((omega_true, phi))
}

/// `n` rows of `Φw` with `w ~ N(0, I)`.
pub fn sample_gaussian<R: Rng + ?Sized>(phi: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<SampleMatrix> {
    let p = phi.nrows();
    // Row-major draw order: observation by observation.
    let mut w = DMatrix::<f64>::zeros(n, p);
    for t in 0..n {
        for k in 0..p {
            w[(t, k)] = rng.sample(StandardNormal);
        }
    }
    SampleMatrix::new(w * phi.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision, recall and F1 of `est` against `truth`.
pub fn f1_score(est: &EdgeSet, truth: &EdgeSet) -> EdgeScores {
    let hits = est.intersection_len(truth) as f64;
    let precision = if est.is_empty() { 0.0 } else { hits / est.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EdgeScores {
        f1,
        precision,
        recall,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    FixedOne,
    LeastSquares,
}

/// `‖c·Â − A0‖_F / ‖A0‖_F` over off-diagonal entries. Returns `(error, c)`.
pub fn frob_error(
    omega_hat_off: &DMatrix<f64>,
    omega0_off: &DMatrix<f64>,
    scale_mode: ScaleMode,
) -> Result<(f64, f64)> {
    let off = |m: &DMatrix<f64>| crate::matrix::off_diagonal(m);
    let est = off(omega_hat_off);
    let truth = off(omega0_off);
    let truth_norm = truth.norm();
    if truth_norm == 0.0 {
        return Err(Error::UndefinedMetric(
            "true off-diagonal is zero, normalized error undefined",
        ));
    }
    let c = match scale_mode {
        ScaleMode::FixedOne => 1.0,
        ScaleMode::LeastSquares => {
            let denom = est.norm_squared();
            if denom == 0.0 {
                0.0
            } else {
                est.dot(&truth) / denom
            }
        }
    };
    Ok(((est * c - truth).norm() / truth_norm, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub frob_error: f64,
    pub scale_c: f64,
}

pub fn evaluate(
    est_edges: &EdgeSet,
    est_off: &DMatrix<f64>,
    truth: &GroundTruthModel,
    scale_mode: ScaleMode,
) -> Result<MetricsReport> {
    let scores = f1_score(est_edges, &truth.edges0);
    let (frob_error, scale_c) = frob_error(est_off, &truth.omega0, scale_mode)?;
    Ok(MetricsReport {
        f1: scores.f1,
        precision: scores.precision,
        recall: scores.recall,
        frob_error,
        scale_c,
    })
}
