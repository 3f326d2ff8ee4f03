//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// `x^T A^{-1} x` through a Cholesky factor of `A`.
pub fn inv_quad_form(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let l = chol.l_dirty();
    // forward substitution on L y = x gives x^T A^{-1} x = |y|^2
    let n = x.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= l[(i, j)] * y[j];
        }
        y[i] = acc / l[(i, i)];
    }
    y.iter().map(|v| v * v).sum()
}

/// `log det A` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Largest absolute asymmetry `|A_ij - A_ji|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_form_matches_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let chol = a.clone().cholesky().unwrap();
        let direct = (x.transpose() * a.clone().try_inverse().unwrap() * &x)[(0, 0)];
        assert!((inv_quad_form(&chol, &x) - direct).abs() < 1e-12);
        assert!((log_det(&chol) - a.determinant().ln()).abs() < 1e-12);
    }
}
