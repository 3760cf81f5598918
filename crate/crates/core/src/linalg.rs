//! Dense symmetric-matrix helpers shared by the Wasserstein and Gaussian DRO code.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Eigenvalues below this are treated as a genuine loss of positive semidefiniteness.
pub const PSD_REJECT: f64 = -1e-10;

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a PSD matrix with tiny negative eigenvalues clamped to zero.
///
/// Eigenvalues below [`PSD_REJECT`] (scaled by the matrix magnitude) are a
/// domain error.
pub fn psd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::Shape(format!("expected square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let scale = m.amax().max(1.0);
    let mut eig = SymmetricEigen::new(symmetrize(m));
    for ev in eig.eigenvalues.iter_mut() {
        if *ev < PSD_REJECT * scale {
            return Err(Error::Domain(format!("matrix is not PSD (eigenvalue {ev:e})")));
        }
        if *ev < 0.0 {
            *ev = 0.0;
        }
    }
    Ok(eig)
}

/// Principal square root of a symmetric PSD matrix.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m)?;
    let root = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}
