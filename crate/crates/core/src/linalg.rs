//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which results carry a warning annotation.
pub const CONDITION_WARNING: f64 = 1e12;
/// Condition number above which a Gram matrix is treated as singular.
pub const CONDITION_SINGULAR: f64 = 1e15;

/// Inverse of a symmetric positive-definite matrix via Cholesky, with a
/// condition-number estimate `(max L_ii / min L_ii)^2`.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let diag = l.diagonal();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &d in diag.iter() {
        lo = lo.min(d.abs());
        hi = hi.max(d.abs());
    }
    let cond = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if !cond.is_finite() {
        return None;
    }
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Some((inv, cond))
}

/// Like [`spd_inverse`] but maps failure to a numerical error carrying a
/// condition estimate from the eigenvalues.
pub fn spd_inverse_or_err(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    spd_inverse(m).ok_or_else(|| Error::Numerical {
        message: format!("{what} is not positive definite"),
        condition: condition_number(m),
    })
}

/// Spectral condition number of a symmetric matrix (infinite when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric square root `L` with `L L^T = m` of a positive semidefinite
/// matrix; negative eigenvalues are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut q = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        q.column_mut(j).scale_mut(s);
    }
    q
}

/// Clips eigenvalues of a symmetric matrix below zero and rebuilds it.
pub fn clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return m.clone();
    }
    let l = psd_sqrt(m);
    let mut out = &l * l.transpose();
    symmetrize(&mut out);
    out
}
