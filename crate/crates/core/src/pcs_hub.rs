//! Baseline partial correlations from the standardized Moore-Penrose
//! inverse of the sample correlation matrix.
//!
//! With `A = (U U^T)^{-1}`, `R^+ = U^T A^2 U`, and the Y-scores are the
//! columns of `A U` scaled to unit norm, so `P = Y^T Y`.

use nalgebra::DMatrix;

use crate::error::{ParsecError, Result};
use crate::linalg;
use crate::uscore::UScoreMatrix;

/// Symmetric `p x p` matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct HubPCorMatrix {
    values: DMatrix<f64>,
}

impl HubPCorMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[(j, k)]
    }
}

/// Unit-norm Y-score columns `(U U^T)^+ U D^{-1/2}`. With `p >= n - 1` the
/// pseudo-inverse is `(U U^T)^{-1}`; with fewer features `U` has full column
/// rank and `(U U^T)^+ U = U (U^T U)^{-1}`.
pub fn yscores(u: &UScoreMatrix) -> Result<DMatrix<f64>> {
    let uv = u.values();
    let mut y = if uv.ncols() >= uv.nrows() {
        let gram = uv * uv.transpose();
        let a = linalg::spd_inverse(&gram).map_err(|rcond| ParsecError::SingularGram { rcond })?;
        a * uv
    } else {
        let gram = uv.transpose() * uv;
        let a = linalg::spd_inverse(&gram).map_err(|rcond| ParsecError::SingularGram { rcond })?;
        uv * a
    };
    for mut col in y.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    Ok(y)
}

pub fn pcs_hub_matrix(u: &UScoreMatrix) -> Result<HubPCorMatrix> {
    let y = yscores(u)?;
    let mut values = y.transpose() * &y;
    linalg::symmetrize_in_place(&mut values);
    values.fill_diagonal(1.0);
    Ok(HubPCorMatrix { values })
}
