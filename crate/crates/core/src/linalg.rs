//! Small dense helpers shared by the estimators.

use nalgebra::DMatrix;

/// Reciprocal condition numbers below this are treated as singular.
pub const RCOND_FLOOR: f64 = 1e-12;

/// Ratio of smallest to largest eigenvalue magnitude of a symmetric matrix.
pub fn reciprocal_condition(sym: &DMatrix<f64>) -> f64 {
    let eig = sym.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    sym.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Inverse of a symmetric positive-definite matrix, or the reciprocal
/// condition number when it is numerically singular.
pub fn spd_inverse(sym: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let rcond = reciprocal_condition(sym);
    if !(rcond >= RCOND_FLOOR) {
        return Err(rcond);
    }
    let chol = sym.clone().cholesky().ok_or(rcond)?;
    let mut inv = chol.inverse();
    symmetrize_in_place(&mut inv);
    Ok(inv)
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Fixed-order dot product; every code path that needs bitwise agreement
/// goes through this one loop.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
