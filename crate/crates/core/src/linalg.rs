//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Reciprocal condition number in the 2-norm, `σ_min / σ_max`.
///
/// Returns 0 for an all-zero or empty matrix.
pub fn rcond(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 || !max.is_finite() {
        return 0.0;
    }
    sv.min() / max
}

/// Inverse guarded by a reciprocal condition number threshold.
pub fn checked_inverse(m: &Mat, min_rcond: f64) -> Option<Mat> {
    if !m.is_square() || rcond(m) < min_rcond {
        return None;
    }
    m.clone().try_inverse()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

/// Positive semi-definiteness up to a relative eigenvalue tolerance.
pub fn is_psd(m: &Mat, tol: f64) -> bool {
    if !is_symmetric(m, 1e-9) {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let eig = symmetrize(m).symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    eig.eigenvalues.iter().all(|&l| l >= -tol * scale)
}

pub fn is_pd(m: &Mat) -> bool {
    is_symmetric(m, 1e-9) && m.nrows() > 0 && m.clone().cholesky().is_some()
}

/// Factor `S` with `S·Sᵀ = cov` for a PSD covariance; negative rounding
/// eigenvalues are clipped to zero.
pub fn psd_sqrt(cov: &Mat) -> Mat {
    let eig = symmetrize(cov).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&roots)
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F, 1)`: relative error that degrades to an
/// absolute one near zero.
pub fn rel_err_mat(a: &Mat, b: &Mat) -> f64 {
    let denom = a.norm().max(b.norm()).max(1.0);
    (a - b).norm() / denom
}

pub fn rel_err_vec(a: &Vector, b: &Vector) -> f64 {
    let denom = a.norm().max(b.norm()).max(1.0);
    (a - b).norm() / denom
}

/// Builds a matrix from row-major nested rows. Rows must be non-ragged.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
