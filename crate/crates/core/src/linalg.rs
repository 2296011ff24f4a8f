//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used for PSD checks: λ_min ≥ −PSD_REL_TOL · trace.
pub const PSD_REL_TOL: f64 = 1e-8;

/// Smallest eigenvalue of a symmetric matrix (0 for the empty matrix).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Verifies that `a` is symmetric positive semi-definite within the
/// relative tolerance and returns its smallest eigenvalue.
pub fn check_psd(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::domain("covariance matrix is not square"));
    }
    let scale = a.diagonal().iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::domain("covariance matrix is not symmetric"));
            }
        }
    }
    let lambda = min_eigenvalue(a);
    let tol = PSD_REL_TOL * a.trace().abs();
    if lambda < -tol {
        return Err(Error::KernelValidity {
            min_eigenvalue: lambda,
            tolerance: tol,
        });
    }
    Ok(lambda)
}

/// Cholesky factor of a PSD matrix that tolerates exact singularity.
///
/// Pivots below `1e-12 · max diag` are set to zero together with the rest of
/// their column, so perfectly dependent coordinates get identical rows.
/// A clearly negative pivot is an error.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let eps = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= eps {
            if d < -1e-8 * max_diag.max(1.0) {
                return Err(Error::KernelValidity {
                    min_eigenvalue: d,
                    tolerance: 1e-8 * max_diag,
                });
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Extracts the sub-matrix with the given row and column index lists.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Log-density of a zero-mean Gaussian with covariance `cov` at `x`.
pub fn mvn_log_pdf(x: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let p = x.len();
    if p == 0 {
        return Ok(0.0);
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::domain("covariance matrix is singular"))?;
    let l = chol.l();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(x)
        .ok_or_else(|| Error::domain("covariance matrix is singular"))?;
    Ok(-0.5 * z.norm_squared() - 0.5 * log_det - 0.5 * p as f64 * (2.0 * std::f64::consts::PI).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psd_cholesky_handles_duplicate_rows() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.5, 1.0, 1.0, 0.5, 0.5, 0.5, 2.0]);
        let l = psd_cholesky(&a).unwrap();
        assert_abs_diff_eq!((&l * l.transpose() - &a).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(l.row(0), l.row(1));
    }

    #[test]
    fn psd_check_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(check_psd(&a), Err(Error::KernelValidity { .. })));
        assert!(psd_cholesky(&a).is_err());
    }

    #[test]
    fn log_pdf_univariate() {
        let x = DVector::from_vec(vec![0.7]);
        let cov = DMatrix::from_element(1, 1, 2.0);
        let expect = -0.5 * 0.49 / 2.0 - 0.5 * (2.0 * std::f64::consts::PI * 2.0).ln();
        assert_abs_diff_eq!(mvn_log_pdf(&x, &cov).unwrap(), expect, epsilon = 1e-14);
    }
}
