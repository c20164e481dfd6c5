//! Inner ADMM loop for the weighted-ℓ1 log-likelihood under the
//! non-positive off-diagonal constraint.
//!
//! The problem is split as `Ω = V` with `Ω ≻ 0` carrying the log-determinant
//! and `V` carrying the penalty and the sign constraint. One iteration is
//!
//! ```text
//! Ω ← argmin tr(Σ̂Ω) − ln|Ω| + ρ/2 ‖V − Ω + U‖²   (eigendecomposition)
//! V ← S_neg(Ω − U, λ/ρ) off the diagonal, Ω − U on it
//! U ← U + V − Ω
//! ```
//!
//! followed by the primal/dual residual test and residual balancing of `ρ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{scaled_outer, sym_eigendecompose, symmetrize, SampleCovariance};

/// How the off-diagonal of `V` is thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConstraint {
    /// `V_ij ≤ 0` off the diagonal (the M-matrix constraint).
    #[default]
    NonPositive,
    /// Plain two-sided soft thresholding. Only used as an ablation.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda0: f64,
    pub rho0: f64,
    pub mu: f64,
    pub tau_abs: f64,
    pub tau_rel: f64,
    /// Log-sum penalty offset.
    pub epsilon: f64,
    pub k_outer_max: usize,
    pub k_inner_max: usize,
    pub constraint: SignConstraint,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            rho0: 2.0,
            mu: 10.0,
            tau_abs: 1e-4,
            tau_rel: 1e-4,
            epsilon: 1e-5,
            k_outer_max: 2,
            k_inner_max: 500,
            constraint: SignConstraint::NonPositive,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda0", self.lambda0),
            ("rho0", self.rho0),
            ("mu", self.mu),
            ("tau_abs", self.tau_abs),
            ("tau_rel", self.tau_rel),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mu <= 1.0 {
            return Err(Error::Config(format!("mu must exceed 1, got {}", self.mu)));
        }
        if self.k_outer_max < 1 || self.k_inner_max < 1 {
            return Err(Error::Config(
                "iteration limits must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Symmetric non-negative per-entry penalties `λ_ij`. The diagonal is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    lambda: DMatrix<f64>,
}

impl PenaltyWeights {
    pub fn new(lambda: DMatrix<f64>) -> Result<Self> {
        if !lambda.is_square() {
            return Err(Error::Input("penalty weights must be square".to_string()));
        }
        let p = lambda.nrows();
        for j in 0..p {
            for i in 0..p {
                let v = lambda[(i, j)];
                if i != j && !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Input(format!(
                        "penalty weight ({i}, {j}) must be finite and non-negative, got {v}"
                    )));
                }
                if i != j && v != lambda[(j, i)] {
                    return Err(Error::Input(format!(
                        "penalty weights are not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let mut lambda = lambda;
        lambda.fill_diagonal(0.0);
        Ok(Self { lambda })
    }

    pub fn uniform(p: usize, lambda: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(p, p, lambda))
    }

    pub fn p(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lambda[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }
}

/// The solver triple plus the current penalty parameter.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub omega: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub rho: f64,
}

impl AdmmState {
    /// `U = V = 0`, `Ω = diag(Σ̂)⁻¹`, `ρ = ρ0`.
    pub fn initial(sigma: &SampleCovariance, rho0: f64) -> Result<Self> {
        let s = sigma.matrix();
        let p = sigma.p();
        if let Some(index) = (0..p).find(|&i| !(s[(i, i)] > 0.0)) {
            return Err(Error::Initialization { index });
        }
        let omega = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
        Ok(Self {
            omega,
            v: DMatrix::zeros(p, p),
            u: DMatrix::zeros(p, p),
            rho: rho0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub omega: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
}

/// Snapshot handed to an observer after every inner iteration.
pub struct Iterate<'a> {
    /// 1-based iteration count.
    pub iteration: usize,
    pub omega: &'a DMatrix<f64>,
    pub v: &'a DMatrix<f64>,
    pub u: &'a DMatrix<f64>,
    pub rho: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Minimizer of `tr(Σ̂Ω) − ln|Ω| + ρ/2 ‖V + U − Ω‖²_F`.
pub fn omega_update(
    sigma: &SampleCovariance,
    v: &DMatrix<f64>,
    u: &DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    let target = sigma.matrix() - (v + u) * rho;
    let eig = sym_eigendecompose(&target)?;
    Ok(scaled_outer(&eig.q, eig.d.iter().map(|&d| omega_eigenvalue(d, rho))))
}

/// Positive root of `ρx² + dx − 1 = 0`, evaluated without cancellation.
fn omega_eigenvalue(d: f64, rho: f64) -> f64 {
    let s = (d * d + 4.0 * rho).sqrt();
    if d >= 0.0 {
        2.0 / (d + s)
    } else {
        (s - d) / (2.0 * rho)
    }
}

/// `(1 − β/|a|)_+ · min(a, 0)`, with `s_neg(0, β) = 0`.
pub fn s_neg(a: f64, beta: f64) -> f64 {
    if a >= 0.0 {
        return 0.0;
    }
    let shrink = 1.0 - beta / a.abs();
    if shrink > 0.0 {
        shrink * a
    } else {
        0.0
    }
}

/// Two-sided soft thresholding `sign(a)·(|a| − β)_+`.
pub fn soft_threshold(a: f64, beta: f64) -> f64 {
    let m = a.abs() - beta;
    if m > 0.0 {
        m.copysign(a)
    } else {
        0.0
    }
}

/// V-update under the sign constraint.
pub fn v_update(
    omega: &DMatrix<f64>,
    u: &DMatrix<f64>,
    weights: &PenaltyWeights,
    rho: f64,
) -> DMatrix<f64> {
    v_update_with(omega, u, weights, rho, SignConstraint::NonPositive)
}

pub fn v_update_with(
    omega: &DMatrix<f64>,
    u: &DMatrix<f64>,
    weights: &PenaltyWeights,
    rho: f64,
    constraint: SignConstraint,
) -> DMatrix<f64> {
    let a = symmetrize(&(omega - u));
    let p = a.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            a[(i, i)]
        } else {
            let beta = weights.get(i, j) / rho;
            match constraint {
                SignConstraint::NonPositive => s_neg(a[(i, j)], beta),
                SignConstraint::Free => soft_threshold(a[(i, j)], beta),
            }
        }
    })
}

/// Scaled dual update `U + V − Ω`.
pub fn u_update(u: &DMatrix<f64>, v: &DMatrix<f64>, omega: &DMatrix<f64>) -> DMatrix<f64> {
    u + v - omega
}

#[allow(clippy::too_many_arguments)]
pub fn check_convergence(
    omega: &DMatrix<f64>,
    v: &DMatrix<f64>,
    v_prev: &DMatrix<f64>,
    u: &DMatrix<f64>,
    rho: f64,
    tau_abs: f64,
    tau_rel: f64,
    p: usize,
) -> Convergence {
    let base = p as f64 * tau_abs;
    let tau_pri = base + tau_rel * omega.norm().max(v.norm());
    let tau_dual = base + tau_rel * u.norm() / rho;
    let primal_residual = (omega - v).norm();
    let dual_residual = rho * (v - v_prev).norm();
    Convergence {
        converged: primal_residual <= tau_pri && dual_residual <= tau_dual,
        primal_residual,
        dual_residual,
    }
}

/// Residual balancing: returns the new `ρ` and the rescaled dual.
pub fn adapt_rho(
    rho: f64,
    primal_residual: f64,
    dual_residual: f64,
    mu: f64,
    u: DMatrix<f64>,
) -> (f64, DMatrix<f64>) {
    if primal_residual > mu * dual_residual {
        (2.0 * rho, u * 0.5)
    } else if dual_residual > mu * primal_residual {
        (0.5 * rho, u * 2.0)
    } else {
        (rho, u)
    }
}

pub fn solve_inner(
    sigma: &SampleCovariance,
    weights: &PenaltyWeights,
    cfg: &SolverConfig,
) -> Result<InnerResult> {
    solve_inner_observed(sigma, weights, cfg, |_| {})
}

/// [`solve_inner`] with a callback invoked after every iteration.
pub fn solve_inner_observed<F>(
    sigma: &SampleCovariance,
    weights: &PenaltyWeights,
    cfg: &SolverConfig,
    mut observe: F,
) -> Result<InnerResult>
where
    F: FnMut(&Iterate<'_>),
{
    cfg.validate()?;
    let p = sigma.p();
    if weights.p() != p {
        return Err(Error::Input(format!(
            "penalty weights are {}x{}, covariance is {p}x{p}",
            weights.p(),
            weights.p()
        )));
    }
    let mut state = AdmmState::initial(sigma, cfg.rho0)?;
    let mut status = Convergence {
        converged: false,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
    };
    let mut iterations = 0;
    while !status.converged && iterations < cfg.k_inner_max {
        iterations += 1;
        let omega = omega_update(sigma, &state.v, &state.u, state.rho)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence {
                    iteration: iterations,
                },
                other => other,
            })?;
        let v = v_update_with(&omega, &state.u, weights, state.rho, cfg.constraint);
        let u = u_update(&state.u, &v, &omega);
        status = check_convergence(
            &omega,
            &v,
            &state.v,
            &u,
            state.rho,
            cfg.tau_abs,
            cfg.tau_rel,
            p,
        );
        if !(status.primal_residual.is_finite() && status.dual_residual.is_finite()) {
            return Err(Error::Divergence {
                iteration: iterations,
            });
        }
        observe(&Iterate {
            iteration: iterations,
            omega: &omega,
            v: &v,
            u: &u,
            rho: state.rho,
            primal_residual: status.primal_residual,
            dual_residual: status.dual_residual,
        });
        state.omega = omega;
        state.v = v;
        if status.converged {
            state.u = u;
        } else {
            let (rho, u) = adapt_rho(
                state.rho,
                status.primal_residual,
                status.dual_residual,
                cfg.mu,
                u,
            );
            state.rho = rho;
            state.u = u;
        }
    }
    Ok(InnerResult {
        omega: state.omega,
        v: state.v,
        iterations,
        converged: status.converged,
        primal_residual: status.primal_residual,
        dual_residual: status.dual_residual,
        rho: state.rho,
    })
}
