//! Dense helpers for symmetric matrices: symmetrization, spectral norms,
//! PSD/PD classification and SPD solves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_mut(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Induced 2-norm (largest singular value).
pub fn opnorm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone().singular_values().max()
}

pub fn sym_eigenvalues(m: &Mat) -> Vector {
    SymmetricEigen::new(symmetrize(m)).eigenvalues
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).min()
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).max()
}

/// Scale-aware threshold `tol * (1 + |M|)` used by the PSD/PD classifiers.
pub fn scaled_tol(m: &Mat, tol: f64) -> f64 {
    tol * (1.0 + opnorm(m))
}

/// Symmetry defect `|M - M^T|` relative to `1 + |M|`.
pub fn symmetry_defect(m: &Mat) -> f64 {
    opnorm(&(m - m.transpose())) / (1.0 + opnorm(m))
}

pub fn is_psd(m: &Mat, tol: f64) -> bool {
    m.is_square() && min_eigenvalue(m) >= -scaled_tol(m, tol)
}

pub fn is_pd(m: &Mat, tol: f64) -> bool {
    m.is_square() && min_eigenvalue(m) >= scaled_tol(m, tol)
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn quad_form(m: &Mat, x: &Vector) -> f64 {
    x.dot(&(m * x))
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn spd_factor(m: &Mat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::Contract(format!("{what} is not positive definite")))
}

/// Solves `M X = rhs` for symmetric positive-definite `M`.
pub fn spd_solve(m: &Mat, rhs: &Mat, what: &str) -> Result<Mat> {
    Ok(spd_factor(m, what)?.solve(rhs))
}

pub fn check_square(m: &Mat, what: &str) -> Result<()> {
    if m.is_square() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn check_shape(m: &Mat, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Numerical rank from singular values thresholded at `tol * sigma_max`.
pub fn numerical_rank(m: &Mat, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Splits a stacked vector into consecutive blocks of length `m`.
pub fn mat_vec_blocks(v: &Vector, m: usize) -> Vec<Vector> {
    v.as_slice().chunks(m).map(Vector::from_column_slice).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_psd_and_pd() {
        let psd = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(is_psd(&psd, 1e-10));
        assert!(!is_pd(&psd, 1e-10));
        assert!(is_pd(&Mat::identity(3, 3), 1e-10));
        let indef = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(!is_psd(&indef, 1e-10));
    }

    #[test]
    fn rank_of_rank_one() {
        let m = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numerical_rank(&m, 1e-10), 1);
        assert_eq!(numerical_rank(&Mat::zeros(2, 2), 1e-10), 0);
    }

    #[test]
    fn opnorm_matches_largest_singular_value() {
        let m = Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert!((opnorm(&m) - 4.0).abs() < 1e-14);
    }
}
