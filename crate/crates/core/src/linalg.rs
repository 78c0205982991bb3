//! Dense helpers on top of nalgebra: jittered Cholesky and a tridiagonal solver.

use alloc::format;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter used on the first factorization attempt.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// A Cholesky factor of `A + jitter * I`.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub chol: Cholesky<f64, Dyn>,
    /// Absolute amount added to the diagonal.
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| libm::log(l[(i, i)])).sum::<f64>()
    }
}

fn mean_diag(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.diagonal().iter().sum::<f64>() / a.nrows() as f64
}

/// Factor `a + jitter * I`, starting at `1e-10 * mean(diag a)` and growing
/// tenfold per failure up to `1e-6 * mean(diag a)`.
pub fn cholesky_jittered(a: &DMatrix<f64>) -> Result<JitteredCholesky> {
    Error::check_dim("cholesky (square)", a.nrows(), a.ncols())?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix to factor has non-finite entries"));
    }
    let scale = mean_diag(a);
    if !(scale > 0.0) {
        return Err(Error::numerical(format!(
            "matrix to factor has non-positive mean diagonal {scale:e}"
        )));
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(JitteredCholesky { chol, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::numerical(format!(
        "cholesky failed with jitter up to {:e}; minimum eigenvalue estimate {:e}",
        JITTER_MAX * scale,
        min_eigenvalue(a)
    )))
}

/// Lower-triangular `L` with `L Lᵀ ≈ a` for a symmetric PSD `a`. The zero
/// matrix gets the zero factor.
pub fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(a.nrows(), a.ncols()));
    }
    Ok(cholesky_jittered(a)?.l())
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Solve `T x = rhs` for symmetric tridiagonal `T` (Thomas algorithm).
/// `diag` has length n, `off` length n - 1.
pub fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &DVector<f64>) -> DVector<f64> {
    let n = diag.len();
    let mut c = alloc::vec![0.0; n];
    let mut d = alloc::vec![0.0; n];
    if n == 0 {
        return DVector::zeros(0);
    }
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - off[i - 1] * c[i - 1];
        c[i] = if i + 1 < n { off[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = DVector::zeros(n);
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_rank_deficient() {
        let v = DVector::from_vec(alloc::vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let f = cholesky_jittered(&a).unwrap();
        assert!(f.jitter > 0.0);
        let rec = f.l() * f.l().transpose();
        assert!((rec - &a).abs().max() < 1e-5);
    }

    #[test]
    fn indefinite_fails_with_eigen_diagnostic() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        match cholesky_jittered(&a) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("minimum eigenvalue")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spd_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = cholesky_jittered(&a).unwrap();
        let rec = f.l() * f.l().transpose();
        assert!(((rec - &a).norm() / a.norm()) < 1e-10);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let diag = [2.0, 2.0, 2.0, 2.0];
        let off = [-1.0, -1.0, -1.0];
        let rhs = DVector::from_vec(alloc::vec![1.0, 0.0, 2.0, -1.0]);
        let x = solve_tridiagonal(&diag, &off, &rhs);
        let mut t = DMatrix::zeros(4, 4);
        for i in 0..4 {
            t[(i, i)] = 2.0;
            if i + 1 < 4 {
                t[(i, i + 1)] = -1.0;
                t[(i + 1, i)] = -1.0;
            }
        }
        assert!((t * x - rhs).norm() < 1e-12);
    }
}
