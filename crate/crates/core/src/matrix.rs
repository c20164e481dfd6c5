//! Dense symmetric matrix primitives.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Symmetric inputs are
//! always re-symmetrized as `(A + Aᵀ)/2` before they are decomposed, so small
//! accumulation asymmetries in solver iterates never leak into the spectrum.

use faer::diag::DiagMut;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd;
use faer::mat::{MatMut, MatRef};
use faer::Par;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest one are treated as zero by
/// [`pinv_sqrt_factor`].
pub const PINV_RANK_TOL: f64 = 1e-9;

/// `n × p` observation matrix, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::Input(format!(
                "need at least 2 observations, got {}",
                data.nrows()
            )));
        }
        if data.ncols() < 2 {
            return Err(Error::Input(format!(
                "need at least 2 variables, got {}",
                data.ncols()
            )));
        }
        check_finite(&data)?;
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Input(format!(
                "row {bad} has {} entries, expected {p}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

/// Sample covariance `Σ̂` (divisor `n`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    sigma: DMatrix<f64>,
}

impl SampleCovariance {
    /// Wraps an externally supplied covariance. The matrix is symmetrized and
    /// must have a finite, non-negative diagonal.
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::Input(format!(
                "covariance must be square and non-empty, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        check_finite(&sigma)?;
        if let Some(i) = (0..sigma.nrows()).find(|&i| sigma[(i, i)] < 0.0) {
            return Err(Error::Input(format!("negative variance at index {i}")));
        }
        Ok(Self {
            sigma: symmetrize(&sigma),
        })
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Largest absolute off-diagonal entry.
    pub fn max_abs_off_diagonal(&self) -> f64 {
        let p = self.p();
        let mut m = 0.0_f64;
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    m = m.max(self.sigma[(i, j)].abs());
                }
            }
        }
        m
    }
}

/// `A = Q·diag(D)·Qᵀ` with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub q: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        scaled_outer(&self.q, self.d.iter().copied())
    }
}

pub fn sample_covariance(x: &SampleMatrix) -> SampleCovariance {
    let xc = centered(x.data());
    let n = x.n() as f64;
    let sigma = (xc.transpose() * &xc) / n;
    SampleCovariance {
        sigma: symmetrize(&sigma),
    }
}

/// Centers every column and scales it to unit variance (divisor `n`).
pub fn standardize(x: &SampleMatrix) -> Result<SampleMatrix> {
    let mut xc = centered(x.data());
    let n = x.n() as f64;
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        if var <= 0.0 || !var.is_finite() {
            return Err(Error::DegenerateColumn { column: j });
        }
        col /= var.sqrt();
    }
    Ok(SampleMatrix { data: xc })
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn sym_eigendecompose(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::Input(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a)?;
    let p = a.nrows();
    let sym = symmetrize(a);
    let mut q = DMatrix::zeros(p, p);
    let mut d = DVector::zeros(p);
    // Sequential on purpose: callers already run in parallel, and a fixed
    // reduction order keeps results bit-identical across thread counts.
    let par = Par::Seq;
    let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        p,
        evd::ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        MatRef::from_column_major_slice(sym.as_slice(), p, p),
        DiagMut::from_slice_mut(d.as_mut_slice()),
        Some(MatMut::from_column_major_slice_mut(q.as_mut_slice(), p, p)),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| Error::EigenFailure)?;
    // faer returns eigenvalues in nondecreasing order
    debug_assert!(d.as_slice().windows(2).all(|w| w[0] <= w[1]));
    Ok(EigenDecomposition { q, d })
}

/// Returns `Φ` with `ΦΦᵀ = A†` for a PSD matrix `A`.
///
/// Eigenvalues at or below `tol · max(D)` are treated as zero. An eigenvalue
/// below `-tol · max(D)` means `A` is not PSD.
pub fn pinv_sqrt_factor(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eigendecompose(a)?;
    let max = eig.d.iter().fold(0.0_f64, |m, &v| m.max(v));
    let cutoff = tol * max;
    if let Some(&min) = eig.d.iter().find(|&&v| v < -cutoff) {
        return Err(Error::NotPsd { eigenvalue: min });
    }
    let scales = eig
        .d
        .iter()
        .map(|&v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 });
    Ok(scaled_outer(&eig.q, scales))
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `Q·diag(s)·Qᵀ`.
pub(crate) fn scaled_outer(q: &DMatrix<f64>, scales: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut qs = q.clone();
    for (mut col, s) in qs.column_iter_mut().zip(scales) {
        col *= s;
    }
    symmetrize(&(qs * q.transpose()))
}

/// `ln |A|` for a symmetric positive-definite matrix.
pub fn log_det_pd(a: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(symmetrize(a)).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..a.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// `A⁻¹` for a symmetric positive-definite matrix.
pub fn inverse_pd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(symmetrize(a)).ok_or(Error::NotPositiveDefinite)?;
    Ok(symmetrize(&chol.inverse()))
}

/// `tr(AB)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum()
}

/// Copy of `a` with the diagonal set to zero.
pub fn off_diagonal(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    out.fill_diagonal(0.0);
    out
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    xc
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
        symmetrize(&random_matrix(rng, p, p))
    }

    #[test]
    fn covariance_of_two_points() {
        let x = SampleMatrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let s = sample_covariance(&x);
        assert_eq!(s.matrix()[(0, 0)], 1.0);
        assert_eq!(s.matrix()[(1, 1)], 0.0);
    }

    #[test]
    fn covariance_of_identical_rows_is_zero() {
        let x = SampleMatrix::from_rows(&[vec![3.0, 4.0], vec![3.0, 4.0]]).unwrap();
        assert!(sample_covariance(&x).matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, p) = (100, 5);
        let x = random_matrix(&mut rng, n, p);
        let s = sample_covariance(&SampleMatrix::new(x.clone()).unwrap());
        let means: Vec<f64> = (0..p)
            .map(|j| (0..n).map(|t| x[(t, j)]).sum::<f64>() / n as f64)
            .collect();
        for i in 0..p {
            for j in 0..p {
                let mut acc = 0.0;
                for t in 0..n {
                    acc += (x[(t, i)] - means[i]) * (x[(t, j)] - means[j]);
                }
                assert!((s.matrix()[(i, j)] - acc / n as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sample_matrix_rejects_bad_shapes() {
        assert!(SampleMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(SampleMatrix::from_rows(&[vec![1.0], vec![2.0]]).is_err());
        let err = SampleMatrix::from_rows(&[vec![1.0, f64::NAN], vec![2.0, 3.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn standardize_two_point_column() {
        let x = SampleMatrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 5.0]]).unwrap();
        let z = standardize(&x).unwrap();
        assert_eq!(z.data()[(0, 0)], -1.0);
        assert_eq!(z.data()[(1, 0)], 1.0);
    }

    #[test]
    fn standardize_names_constant_column() {
        let x = SampleMatrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![4.0, 5.0]]).unwrap();
        assert!(matches!(
            standardize(&x),
            Err(Error::DegenerateColumn { column: 1 })
        ));
    }

    #[test]
    fn standardize_random_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = SampleMatrix::new(random_matrix(&mut rng, 50, 3).map(|v| 4.0 * v + 2.0)).unwrap();
        let z = standardize(&x).unwrap();
        for col in z.data().column_iter() {
            let mean = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() <= 1e-12);
            assert!((var - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn eigen_known_spectra() {
        let e = sym_eigendecompose(&DMatrix::identity(3, 3)).unwrap();
        assert!(e.d.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = sym_eigendecompose(&a).unwrap();
        assert!((e.d[0] - 1.0).abs() < 1e-14 && (e.d[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_symmetric(&mut rng, 20);
        let e = sym_eigendecompose(&a).unwrap();
        assert!((e.reconstruct() - &a).norm() <= 1e-10 * a.norm());
        assert!(e.d.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let mut a = DMatrix::identity(2, 2);
        a[(1, 0)] = f64::INFINITY;
        assert!(sym_eigendecompose(&a).is_err());
    }

    #[test]
    fn pinv_sqrt_simple_cases() {
        let phi = pinv_sqrt_factor(&DMatrix::identity(3, 3), PINV_RANK_TOL).unwrap();
        assert!((phi - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.0]));
        let phi = pinv_sqrt_factor(&a, PINV_RANK_TOL).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]));
        assert!((phi - want).norm() < 1e-14);
    }

    #[test]
    fn pinv_sqrt_rejects_indefinite() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(matches!(
            pinv_sqrt_factor(&a, PINV_RANK_TOL),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn pinv_sqrt_rank_deficient_matches_svd_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = random_matrix(&mut rng, 10, 6);
        let a = &b * b.transpose();
        let phi = pinv_sqrt_factor(&a, PINV_RANK_TOL).unwrap();
        let pinv = a.clone().pseudo_inverse(1e-9 * a.norm()).unwrap();
        assert!((&phi * phi.transpose() - pinv).norm() <= 1e-8);
    }

    #[test]
    fn log_det_and_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((log_det_pd(&a).unwrap() - 3.0_f64.ln()).abs() < 1e-14);
        let inv = inverse_pd(&a).unwrap();
        assert!((&a * inv - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(log_det_pd(&neg), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn trace_of_product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 7, 7);
        let b = random_matrix(&mut rng, 7, 7);
        assert!((trace_of_product(&a, &b) - (&a * &b).trace()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prop_covariance_symmetric_psd(seed in any::<u64>(), n in 2usize..30, p in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = SampleMatrix::new(random_matrix(&mut rng, n, p)).unwrap();
            let s = sample_covariance(&x);
            prop_assert_eq!(s.matrix().clone(), s.matrix().transpose());
            let e = sym_eigendecompose(s.matrix()).unwrap();
            let max = e.d.max().max(0.0);
            prop_assert!(e.d.min() >= -1e-10 * max.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn prop_eigen_invariants(seed in any::<u64>(), p in 1usize..25, scale in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_symmetric(&mut rng, p) * scale;
            let e = sym_eigendecompose(&a).unwrap();
            let ortho = (e.q.transpose() * &e.q - DMatrix::<f64>::identity(p, p)).norm();
            prop_assert!(ortho <= 1e-10 * p as f64);
            prop_assert!((e.reconstruct() - &a).norm() <= 1e-10 * a.norm().max(1.0));
        }

        #[test]
        fn prop_pinv_moore_penrose(seed in any::<u64>(), p in 2usize..10, rank in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_matrix(&mut rng, p, rank.min(p));
            let a = &b * b.transpose();
            let phi = pinv_sqrt_factor(&a, PINV_RANK_TOL).unwrap();
            let g = &phi * phi.transpose();
            let tol = 1e-8 * (1.0 + a.norm()) * (1.0 + g.norm());
            prop_assert!((&a * &g * &a - &a).norm() <= tol);
            prop_assert!((&g * &a * &g - &g).norm() <= tol);
            let ag = &a * &g;
            let ga = &g * &a;
            prop_assert!((&ag - ag.transpose()).norm() <= tol);
            prop_assert!((&ga - ga.transpose()).norm() <= tol);
        }

        #[test]
        fn prop_standardize_idempotent(seed in any::<u64>(), n in 3usize..40, p in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = SampleMatrix::new(random_matrix(&mut rng, n, p)).unwrap();
            let z = standardize(&x).unwrap();
            let zz = standardize(&z).unwrap();
            prop_assert!((zz.data() - z.data()).amax() <= 1e-10);
        }
    }
}
