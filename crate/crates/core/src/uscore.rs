//! Standardization and projection of features onto the unit sphere.
//!
//! Each column is centered and scaled to unit norm, then rotated into the
//! (n-1)-dimensional complement of the all-ones vector. Inner products of
//! the resulting U-scores are the sample correlations, and
//! `r_jk = 1 - |U_j - U_k|^2 / 2`.

use nalgebra::DMatrix;

use crate::error::{ParsecError, Result};
use crate::io::DataMatrix;

/// Centered columns scaled to unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreMatrix {
    values: DMatrix<f64>,
}

impl ZScoreMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }
}

/// `n x (n-1)` matrix with orthonormal columns, each orthogonal to the ones vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    values: DMatrix<f64>,
}

impl OrthonormalBasis {
    /// Helmert construction: column k (1-based) has `1/sqrt(k(k+1))` in its
    /// first k rows, `-k/sqrt(k(k+1))` in row k+1 and zeros below.
    pub fn helmert(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(ParsecError::InvalidArgument(format!(
                "basis needs n >= 2, got {n}"
            )));
        }
        let mut values = DMatrix::zeros(n, n - 1);
        for c in 0..n - 1 {
            let k = (c + 1) as f64;
            let scale = 1.0 / (k * (k + 1.0)).sqrt();
            for r in 0..=c {
                values[(r, c)] = scale;
            }
            values[(c + 1, c)] = -k * scale;
        }
        Ok(Self { values })
    }

    /// Accepts any `n x (n-1)` matrix that satisfies the basis invariants to 1e-10.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if n < 2 || values.ncols() != n - 1 {
            return Err(ParsecError::Dimension(format!(
                "basis must be n x (n-1), got {} x {}",
                n,
                values.ncols()
            )));
        }
        let gram = values.transpose() * &values;
        let id = DMatrix::<f64>::identity(n - 1, n - 1);
        let ortho_err = crate::linalg::max_abs_diff(&gram, &id);
        let ones_err = values.row_sum().amax();
        if ortho_err > 1e-10 || ones_err > 1e-10 {
            return Err(ParsecError::InvalidArgument(format!(
                "not an orthonormal basis of 1^perp (orthonormality error {ortho_err:.2e}, ones error {ones_err:.2e})"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// `(n-1) x p` matrix of U-scores; every column lies on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct UScoreMatrix {
    values: DMatrix<f64>,
    n: usize,
}

impl UScoreMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Original sample count (one more than the row count).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let rows = self.values.nrows();
        &self.values.as_slice()[j * rows..(j + 1) * rows]
    }
}

pub fn standardize(data: &DataMatrix) -> Result<ZScoreMatrix> {
    let mut values = data.values().clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        // sqrt(S_jj (n-1)) is the norm of the centered column.
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(ParsecError::ZeroVariance {
                index: j,
                name: data.column_name(j),
            });
        }
        col /= norm;
    }
    Ok(ZScoreMatrix { values })
}

pub fn build_basis(n: usize) -> Result<OrthonormalBasis> {
    OrthonormalBasis::helmert(n)
}

pub fn compute_uscores(z: &ZScoreMatrix, basis: &OrthonormalBasis) -> Result<UScoreMatrix> {
    if basis.n() != z.n() {
        return Err(ParsecError::Dimension(format!(
            "basis built for n = {} but data has n = {}",
            basis.n(),
            z.n()
        )));
    }
    Ok(UScoreMatrix {
        values: basis.values().transpose() * z.values(),
        n: z.n(),
    })
}

/// Standardize, then project with the Helmert basis.
pub fn uscores(data: &DataMatrix) -> Result<UScoreMatrix> {
    let z = standardize(data)?;
    let basis = build_basis(data.n())?;
    compute_uscores(&z, &basis)
}
