//! Small dense helpers for the T×T matrices that appear everywhere in the
//! theory. T is the number of tasks, so nothing here needs to scale.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Extreme eigenvalues of a symmetric matrix, `(min, max)`.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen_range(m).1
}

/// Symmetric positive semidefinite square root `V diag(sqrt(max(w, 0))) Vᵀ`.
///
/// Negative eigenvalues (round-off on singular inputs) are clamped to zero, so
/// the result is the unique PSD root of the PSD part of `m`.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|w| libm::sqrt(w.max(0.0)));
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    let mut root = scaled * v.transpose();
    symmetrize(&mut root);
    root
}

/// Solves `k x = rhs` column by column for symmetric positive definite `k`.
pub fn spd_solve(k: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = k.cholesky().ok_or(Error::SingularSystem)?;
    Ok(chol.solve(rhs))
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| f64::max(acc, (x - y).abs()))
}
