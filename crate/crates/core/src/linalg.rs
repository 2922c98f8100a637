//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative eigenvalue slack accepted when a matrix is required to be PSD.
pub const PSD_TOLERANCE: f64 = 1e-9;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = 1.0f64.max(m[(i, j)].abs()).max(m[(j, i)].abs());
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Returns `L` with `L Lᵀ = m` for a symmetric PSD `m`.
///
/// Cholesky is used when it succeeds; otherwise the eigen-decomposition square
/// root with negative round-off eigenvalues clipped to zero. `None` when an
/// eigenvalue is below `-PSD_TOLERANCE * max(1, λ_max)`.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !m.iter().all(|v| v.is_finite()) {
        return None;
    }
    let sym = symmetrize(m);
    if let Some(chol) = sym.clone().cholesky() {
        return Some(chol.l());
    }
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let tol = PSD_TOLERANCE * max.max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return None;
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Raises every eigenvalue of the symmetric matrix `m` to at least `floor`.
///
/// This is the maximum-likelihood covariance under the constraint `Σ ⪰ floor·I`.
pub fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&clipped) * v.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn sqrt_of_zero_matrix_is_zero() {
        let l = psd_sqrt(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(l, DMatrix::zeros(3, 3));
    }

    #[test]
    fn sqrt_reconstructs_rank_deficient_matrix() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m = &v * v.transpose();
        let l = psd_sqrt(&m).unwrap();
        assert!((&l * l.transpose() - &m).amax() < 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_sqrt(&m).is_none());
    }

    #[test]
    fn floor_lifts_only_small_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        let f = floor_eigenvalues(&m, 1e-3);
        assert!((f[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((f[(1, 1)] - 1e-3).abs() < 1e-15);
    }
}
