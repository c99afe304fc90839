//! Scaled partial correlations by leave-one-out regression on U-scores.
//!
//! Row j of `H` holds the inner products of `U_j` with the unit-normalized
//! columns of `(U^{-j} U^{-j}^T)^{-1} U^{-j}`, where `U^{-j}` drops feature j.
//! [`parsec_base`] evaluates that definition directly with one
//! `(n-1) x (n-1)` inversion per row. [`parsec_scalable`] inverts `U U^T`
//! once and recovers every leave-one-out inverse through a rank-one
//! (Sherman-Morrison) correction:
//!
//! ```text
//! A = (U U^T)^{-1},  B = U^T A U,  F = A U
//! H_jk = c_jk / |F_k + c_jk F_j|,   c_jk = B_jk / (1 - B_jj)
//! ```

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{ParsecError, Result};
use crate::linalg::{self, dot};
use crate::uscore::UScoreMatrix;

/// Leverages at or above `1 - LEVERAGE_MARGIN` make the rank-one downdate degenerate.
pub const LEVERAGE_MARGIN: f64 = 1e-12;

/// `p x p` matrix of scaled partial correlations. Row j comes from
/// regressing feature j on the rest, so the matrix is not symmetric until
/// passed through [`symmetrize`]. The diagonal is 1 by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPCorMatrix {
    values: DMatrix<f64>,
}

impl ScaledPCorMatrix {
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(ParsecError::Dimension(format!(
                "H must be square, got {:?}",
                values.shape()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[(j, k)]
    }

    pub fn is_symmetric(&self) -> bool {
        self.values == self.values.transpose()
    }

    fn from_rows(p: usize, rows: &[f64]) -> Self {
        Self {
            values: DMatrix::from_row_slice(p, p, rows),
        }
    }
}

/// Shared state of the rank-one algorithm. Immutable once built, so rows of
/// `H` (and of `B`) can be generated independently on any thread.
#[derive(Debug, Clone)]
pub struct RankOneWorkspace {
    u: DMatrix<f64>,
    a: DMatrix<f64>,
    f: DMatrix<f64>,
    b_diag: Vec<f64>,
}

impl RankOneWorkspace {
    pub fn new(u: &UScoreMatrix) -> Result<Self> {
        let uv = u.values();
        let gram = uv * uv.transpose();
        let a = linalg::spd_inverse(&gram).map_err(|rcond| ParsecError::SingularGram { rcond })?;
        let f = &a * uv;
        let rows = uv.nrows();
        let (us, fs) = (uv.as_slice(), f.as_slice());
        let b_diag: Vec<f64> = (0..u.p())
            .map(|j| dot(&us[j * rows..(j + 1) * rows], &fs[j * rows..(j + 1) * rows]))
            .collect();
        if let Some((feature, &leverage)) = b_diag
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b < 1.0 - LEVERAGE_MARGIN))
        {
            return Err(ParsecError::DegenerateLeverage { feature, leverage });
        }
        Ok(Self {
            u: uv.clone(),
            a,
            f,
            b_diag,
        })
    }

    pub fn p(&self) -> usize {
        self.u.ncols()
    }

    fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `(U U^T)^{-1}`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `A U`.
    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn b_diag(&self) -> &[f64] {
        &self.b_diag
    }

    fn u_col(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.u.as_slice()[j * d..(j + 1) * d]
    }

    fn f_col(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.f.as_slice()[j * d..(j + 1) * d]
    }

    /// `B_jk = U_j^T F_k` for all k, written into `out`.
    pub fn b_row(&self, j: usize, out: &mut [f64]) {
        let uj = self.u_col(j);
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = dot(uj, self.f_col(k));
        }
    }

    /// Materializes the full `p x p` matrix `B` row by row.
    pub fn b(&self) -> DMatrix<f64> {
        let p = self.p();
        let mut rows = vec![0.0; p * p];
        rows.par_chunks_mut(p)
            .enumerate()
            .for_each(|(j, row)| self.b_row(j, row));
        DMatrix::from_row_slice(p, p, &rows)
    }

    #[inline]
    fn h_entry(&self, j: usize, b_jk: f64, f_j: &[f64], k: usize) -> f64 {
        let c = b_jk / (1.0 - self.b_diag[j]);
        if c == 0.0 {
            return 0.0;
        }
        let f_k = self.f_col(k);
        let mut ss = 0.0;
        for (x, y) in f_k.iter().zip(f_j) {
            let v = x + c * y;
            ss += v * v;
        }
        c / ss.sqrt()
    }

    /// Row j of `H` (diagonal slot set to 1). `scratch` must hold p values.
    pub fn h_row(&self, j: usize, out: &mut [f64], scratch: &mut [f64]) {
        self.b_row(j, scratch);
        let f_j = self.f_col(j);
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = if k == j {
                1.0
            } else {
                self.h_entry(j, scratch[k], f_j, k)
            };
        }
    }

    /// Entries `H_jk` for `k > j` only: the upper-triangle symmetrization
    /// never reads anything else. Bitwise identical to the dense row.
    pub fn h_upper_row(&self, j: usize, out: &mut Vec<f64>) {
        out.clear();
        let uj = self.u_col(j);
        let f_j = self.f_col(j);
        for k in (j + 1)..self.p() {
            let b_jk = dot(uj, self.f_col(k));
            out.push(self.h_entry(j, b_jk, f_j, k));
        }
    }
}

/// Direct evaluation: one leave-one-out inversion per row.
pub fn parsec_base(u: &UScoreMatrix) -> Result<ScaledPCorMatrix> {
    let p = u.p();
    let uv = u.values();
    let d = uv.nrows();
    let mut rows = vec![0.0; p * p];
    rows.par_chunks_mut(p)
        .enumerate()
        .try_for_each(|(j, row)| -> Result<()> {
            let mut minus = DMatrix::zeros(d, p - 1);
            for (slot, k) in (0..p).filter(|&k| k != j).enumerate() {
                minus.column_mut(slot).copy_from(&uv.column(k));
            }
            let gram = &minus * minus.transpose();
            let inv = linalg::spd_inverse(&gram)
                .map_err(|rcond| ParsecError::SingularLeaveOneOut { feature: j, rcond })?;
            let coef = inv * &minus;
            let uj = u.column(j);
            for (slot, k) in (0..p).filter(|&k| k != j).enumerate() {
                let c = coef.column(slot);
                row[k] = dot(c.as_slice(), uj) / c.norm();
            }
            row[j] = 1.0;
            Ok(())
        })?;
    Ok(ScaledPCorMatrix::from_rows(p, &rows))
}

/// Rank-one-update evaluation, parallel over rows. Output does not depend
/// on the number of threads.
pub fn parsec_scalable(u: &UScoreMatrix) -> Result<ScaledPCorMatrix> {
    let ws = RankOneWorkspace::new(u)?;
    let p = ws.p();
    let mut rows = vec![0.0; p * p];
    rows.par_chunks_mut(p).enumerate().for_each_init(
        || vec![0.0; p],
        |scratch, (j, row)| ws.h_row(j, row, scratch),
    );
    Ok(ScaledPCorMatrix::from_rows(p, &rows))
}

/// Streams the upper triangle of `H` without materializing `B` or `H`,
/// keeping the entries accepted by `keep`. Entries come back ordered by
/// (j, k); they match the dense path bit for bit.
pub fn scan_upper<F>(u: &UScoreMatrix, keep: F) -> Result<Vec<(usize, usize, f64)>>
where
    F: Fn(f64) -> bool + Sync,
{
    let ws = RankOneWorkspace::new(u)?;
    Ok(scan_upper_with(&ws, keep))
}

pub fn scan_upper_with<F>(ws: &RankOneWorkspace, keep: F) -> Vec<(usize, usize, f64)>
where
    F: Fn(f64) -> bool + Sync,
{
    let per_row: Vec<Vec<(usize, usize, f64)>> = (0..ws.p())
        .into_par_iter()
        .map_init(Vec::new, |buf, j| {
            ws.h_upper_row(j, buf);
            buf.iter()
                .enumerate()
                .filter(|(_, &h)| keep(h))
                .map(|(off, &h)| (j, j + 1 + off, h))
                .collect()
        })
        .collect();
    per_row.into_iter().flatten().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymmetrizeMode {
    /// Copy `H_jk`, j < k, to both positions.
    #[default]
    UpperTriangle,
    /// Keep whichever of `H_jk`, `H_kj` is smaller in magnitude.
    MinAbs,
    /// Keep whichever is larger in magnitude.
    MaxAbs,
    Average,
}

impl std::str::FromStr for SymmetrizeMode {
    type Err = ParsecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper-triangle" | "upper" => Ok(Self::UpperTriangle),
            "min-abs" => Ok(Self::MinAbs),
            "max-abs" => Ok(Self::MaxAbs),
            "average" => Ok(Self::Average),
            other => Err(ParsecError::InvalidArgument(format!(
                "unknown symmetrization mode `{other}`"
            ))),
        }
    }
}

pub fn symmetrize(h: &ScaledPCorMatrix, mode: SymmetrizeMode) -> ScaledPCorMatrix {
    let p = h.p();
    let mut out = h.values.clone();
    for j in 0..p {
        for k in (j + 1)..p {
            let (upper, lower) = (h.values[(j, k)], h.values[(k, j)]);
            let v = match mode {
                SymmetrizeMode::UpperTriangle => upper,
                SymmetrizeMode::MinAbs => {
                    if lower.abs() < upper.abs() {
                        lower
                    } else {
                        upper
                    }
                }
                SymmetrizeMode::MaxAbs => {
                    if lower.abs() > upper.abs() {
                        lower
                    } else {
                        upper
                    }
                }
                SymmetrizeMode::Average => 0.5 * (upper + lower),
            };
            out[(j, k)] = v;
            out[(k, j)] = v;
        }
    }
    ScaledPCorMatrix { values: out }
}

/// Largest allowed excess of `|H_jk|` over 1 from rounding.
pub const BOUND_SLACK: f64 = 1e-10;
