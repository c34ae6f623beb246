//! Small dense-matrix helpers shared by the filter and smoother passes.
//!
//! Everything here operates on symmetric matrices of the state dimension
//! (1 or 2 in all worked cases, arbitrary small n allowed).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot floor below which a symmetric inverse is refused.
pub const PSD_PIVOT_FLOOR: f64 = 1e-14;

/// Force exact symmetry: `(m + m^T) / 2`.
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

/// Check that a symmetric matrix is PSD within `tol` of its own scale.
///
/// Uses closed forms for n <= 2 and an eigenvalue check beyond.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    let scale = m.amax().max(1e-300);
    let floor = -tol * scale;
    match n {
        1 => m[(0, 0)] >= floor,
        2 => {
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            m[(0, 0)] >= floor && m[(1, 1)] >= floor && det >= floor * scale
        }
        _ => m
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .all(|&ev| ev >= floor),
    }
}

/// Inverse of a symmetric positive-definite matrix.
///
/// n = 1 and n = 2 use the closed-form inverse; larger n falls back to
/// Gaussian elimination with partial pivoting. Pivots smaller than
/// [`PSD_PIVOT_FLOOR`] relative to the matrix scale are rejected.
pub fn sym_positive_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let scale = m.amax().max(1e-300);
    match n {
        1 => {
            let a = m[(0, 0)];
            if a <= PSD_PIVOT_FLOOR * scale {
                return Err(Error::IllConditioned(format!(
                    "{context}: scalar pivot {a:.3e} below floor"
                )));
            }
            Ok(DMatrix::from_element(1, 1, 1.0 / a))
        }
        2 => {
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let det = a * d - b * b;
            if det <= PSD_PIVOT_FLOOR * scale * scale {
                return Err(Error::IllConditioned(format!(
                    "{context}: 2x2 determinant {det:.3e} below floor"
                )));
            }
            let inv_det = 1.0 / det;
            let mut out = DMatrix::zeros(2, 2);
            out[(0, 0)] = d * inv_det;
            out[(0, 1)] = -b * inv_det;
            out[(1, 0)] = -b * inv_det;
            out[(1, 1)] = a * inv_det;
            Ok(out)
        }
        _ => general_inverse(m, scale, context),
    }
}

/// Inverse of a general square matrix (Gaussian elimination, partial pivoting).
pub fn general_inverse(m: &DMatrix<f64>, scale: f64, context: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a[(col, col)].abs();
        for r in (col + 1)..n {
            if a[(r, col)].abs() > pivot_mag {
                pivot_mag = a[(r, col)].abs();
                pivot_row = r;
            }
        }
        if pivot_mag <= PSD_PIVOT_FLOOR * scale {
            return Err(Error::IllConditioned(format!(
                "{context}: pivot {pivot_mag:.3e} below floor at column {col}"
            )));
        }
        if pivot_row != col {
            a.swap_rows(pivot_row, col);
            inv.swap_rows(pivot_row, col);
        }
        let pivot = a[(col, col)];
        for c in 0..n {
            a[(col, c)] /= pivot;
            inv[(col, c)] /= pivot;
        }
        for r in 0..n {
            if r != col {
                let factor = a[(r, col)];
                if factor != 0.0 {
                    for c in 0..n {
                        a[(r, c)] -= factor * a[(col, c)];
                        inv[(r, c)] -= factor * inv[(col, c)];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// Cholesky factor L of a symmetric PSD matrix (LL^T = m), with a PSD floor:
/// tiny negative diagonal contributions are clamped to zero, anything worse
/// is an error.
pub fn psd_cholesky(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let scale = m.amax().max(1e-300);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag < -PSD_PIVOT_FLOOR * scale {
            return Err(Error::IllConditioned(format!(
                "{context}: matrix not PSD (diagonal residual {diag:.3e})"
            )));
        }
        let d = diag.max(0.0).sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut sum = m[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = if d > 0.0 { sum / d } else { 0.0 };
        }
    }
    Ok(l)
}

/// `y := a*x + y` without allocating.
pub fn axpy_mat(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

/// `y := a*x + y` for vectors.
pub fn axpy_vec(y: &mut DVector<f64>, a: f64, x: &DVector<f64>) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}
