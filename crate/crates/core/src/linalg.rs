//! Small dense solves for covariance submatrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Condition number above which a Gram matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Extract the principal submatrix `m[idx, idx]`.
pub fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Ratio of the extreme eigenvalues of a symmetric matrix; infinite when the
/// smallest eigenvalue is not positive.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    if lo <= 0.0 || !lo.is_finite() || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Solve `gram * x = rhs` for a symmetric positive definite `gram` with a
/// fully pivoted LU factorization. Returns `None` when the condition number
/// exceeds [`MAX_CONDITION`].
pub fn solve_gram(gram: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    if gram.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    if condition_number(&gram) > MAX_CONDITION {
        return None;
    }
    gram.full_piv_lu().solve(&rhs)
}
