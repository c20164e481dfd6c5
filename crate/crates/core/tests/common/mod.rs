#![allow(dead_code)]

use lapgraph::admm::InnerResult;
use lapgraph::matrix::{inverse_pd, log_det_pd, trace_of_product, SampleCovariance};
use nalgebra::DMatrix;

/// Weighted-ℓ1 objective `tr(ΣΩ) − ln|Ω| + Σ_{i≠j} λ|Ω_ij|` for a uniform
/// weight, `None` outside the PD cone.
pub fn lasso_objective(omega: &DMatrix<f64>, sigma: &SampleCovariance, lambda: f64) -> Option<f64> {
    let logdet = log_det_pd(omega).ok()?;
    let p = omega.nrows();
    let mut pen = 0.0;
    for j in 0..p {
        for i in 0..p {
            if i != j {
                pen += omega[(i, j)].abs();
            }
        }
    }
    Some(trace_of_product(omega, sigma.matrix()) - logdet + lambda * pen)
}

/// The objective at the sparse iterate `V`, or at `Ω` if `V` is not PD.
pub fn solver_objective(r: &InnerResult, sigma: &SampleCovariance, lambda: f64) -> f64 {
    lasso_objective(&r.v, sigma, lambda)
        .or_else(|| lasso_objective(&r.omega, sigma, lambda))
        .expect("solver output is positive definite")
}

fn f2(a: f64, b: f64, c: f64, s: &DMatrix<f64>, lambda: f64) -> f64 {
    let det = a * c - b * b;
    if a <= 0.0 || c <= 0.0 || b > 0.0 || det <= 0.0 {
        return f64::INFINITY;
    }
    a * s[(0, 0)] + c * s[(1, 1)] + 2.0 * b * s[(0, 1)] - det.ln() + 2.0 * lambda * b.abs()
}

/// Nested-grid minimum of the 2×2 constrained problem over `a > 0, c > 0,
/// b ≤ 0`. Each level scans a 41³ box around the incumbent (plus the `b = 0`
/// face) and shrinks the box four-fold until the step is below 1e-4.
pub fn brute_force_p2(sigma: &SampleCovariance, lambda: f64) -> (f64, [f64; 3]) {
    let s = sigma.matrix();
    let mut best = [1.0 / s[(0, 0)], 0.0, 1.0 / s[(1, 1)]];
    let mut half = [best[0] * 4.0, best[0].max(best[2]) * 4.0, best[2] * 4.0];
    let mut fbest = f2(best[0], best[1], best[2], s, lambda);
    let k = 20;
    loop {
        let centre = best;
        for ia in -k..=k {
            let a = centre[0] + half[0] * ia as f64 / k as f64;
            for ic in -k..=k {
                let c = centre[2] + half[2] * ic as f64 / k as f64;
                let b_zero = f2(a, 0.0, c, s, lambda);
                if b_zero < fbest {
                    fbest = b_zero;
                    best = [a, 0.0, c];
                }
                for ib in -k..=k {
                    let b = centre[1] + half[1] * ib as f64 / k as f64;
                    let v = f2(a, b, c, s, lambda);
                    if v < fbest {
                        fbest = v;
                        best = [a, b, c];
                    }
                }
            }
        }
        let step = half.iter().fold(0.0_f64, |m, &h| m.max(h)) / k as f64;
        if step <= 1e-4 {
            return (fbest, best);
        }
        for h in &mut half {
            *h /= 4.0;
        }
    }
}

/// Largest KKT violation at `Ω̂` for uniform weight `λ`: `|g_ij − λ|` on
/// edges, `max(0, g_ij − λ)` on zeros and `|Σ_ii − [Ω̂⁻¹]_ii|` on the
/// diagonal, with `g = Σ̂ − Ω̂⁻¹`.
pub struct Kkt {
    pub edge: f64,
    pub zero: f64,
    pub diagonal: f64,
}

pub fn kkt_residuals(r: &InnerResult, sigma: &SampleCovariance, lambda: f64) -> Kkt {
    let inv = inverse_pd(&r.omega).expect("PD");
    let g = sigma.matrix() - inv;
    let p = g.nrows();
    let mut out = Kkt {
        edge: 0.0,
        zero: 0.0,
        diagonal: 0.0,
    };
    for j in 0..p {
        for i in 0..p {
            if i == j {
                out.diagonal = out.diagonal.max(g[(i, i)].abs());
            } else if r.v[(i, j)] < 0.0 {
                out.edge = out.edge.max((g[(i, j)] - lambda).abs());
            } else {
                out.zero = out.zero.max(g[(i, j)] - lambda);
            }
        }
    }
    out
}
