//! Precision-matrix estimation on a fixed (screened) edge structure, and
//! minimum-variance portfolio weights.
//!
//! Features without any active edge are dropped before the coordinate
//! descent and re-inserted afterwards as independent coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{ParsecError, Result};
use crate::io::EdgeSet;
use crate::linalg;

/// Symmetric adjacency with a true diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStructure {
    p: usize,
    adjacency: Vec<bool>,
}

impl EdgeStructure {
    /// No edges.
    pub fn empty(p: usize) -> Self {
        let mut adjacency = vec![false; p * p];
        for i in 0..p {
            adjacency[i * p + i] = true;
        }
        Self { p, adjacency }
    }

    pub fn full(p: usize) -> Self {
        Self {
            p,
            adjacency: vec![true; p * p],
        }
    }

    pub fn from_pairs(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut s = Self::empty(p);
        for (a, b) in pairs {
            if a >= p || b >= p {
                return Err(ParsecError::Dimension(format!("edge ({a}, {b}) outside p = {p}")));
            }
            s.adjacency[a * p + b] = true;
            s.adjacency[b * p + a] = true;
        }
        Ok(s)
    }

    pub fn from_edges(p: usize, edges: &EdgeSet) -> Result<Self> {
        Self::from_pairs(p, edges.pairs())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.p + j]
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.p).filter(|&j| j != i && self.is_active(i, j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.p).filter(|&j| j != i && self.is_active(i, j)).count()
    }

    fn restrict(&self, keep: &[usize]) -> Self {
        let q = keep.len();
        let mut adjacency = vec![false; q * q];
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                adjacency[a * q + b] = self.is_active(i, j);
            }
        }
        Self { p: q, adjacency }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub omega_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub const DEFAULT_MAX_ITER: usize = 10_000;

fn validate_inputs(s: &DMatrix<f64>, e: &EdgeStructure, eps: f64) -> Result<()> {
    if s.nrows() != s.ncols() || s.nrows() != e.p() {
        return Err(ParsecError::Dimension(format!(
            "covariance is {:?} but structure has p = {}",
            s.shape(),
            e.p()
        )));
    }
    if !(eps > 0.0) {
        return Err(ParsecError::InvalidArgument(format!("eps = {eps} must be positive")));
    }
    if let Some(i) = (0..s.nrows()).find(|&i| !(s[(i, i)] > 0.0)) {
        return Err(ParsecError::InvalidArgument(format!(
            "sample covariance diagonal entry {i} is {} (must be positive)",
            s[(i, i)]
        )));
    }
    if linalg::max_abs_diff(s, &s.transpose()) > 1e-10 * s.amax().max(1.0) {
        return Err(ParsecError::InvalidArgument("sample covariance is not symmetric".into()));
    }
    Ok(())
}

fn submatrix(m: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(keep.len(), keep.len(), |a, b| m[(keep[a], keep[b])])
}

/// Re-inserts the connected block and puts `diag_of(i)` on isolated slots.
fn repad(p: usize, keep: &[usize], block: &DMatrix<f64>, diag_of: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p, p);
    for i in 0..p {
        out[(i, i)] = diag_of(i);
    }
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            out[(i, j)] = block[(a, b)];
        }
    }
    out
}

fn connected(e: &EdgeStructure) -> Vec<usize> {
    (0..e.p()).filter(|&i| e.degree(i) > 0).collect()
}

fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = match linalg::spd_inverse(m) {
        Ok(inv) => inv,
        Err(_) => m
            .clone()
            .try_inverse()
            .ok_or_else(|| ParsecError::Estimation("estimated precision matrix is singular".into()))?,
    };
    linalg::symmetrize_in_place(&mut inv);
    Ok(inv)
}

/// CONCORD pseudo-likelihood coordinate descent.
///
/// Off-diagonal active entries are updated (both `(i, j)` and `(j, i)`) to
/// `-(sum_{j' != j} w_ij' s_jj' + sum_{i' != i} w_i'j s_ii') / (s_ii + s_jj)`
/// and diagonals to the positive root of `s_ii w^2 + (sum_{j != i} w_ij s_ij) w - 1`.
/// Isolated features keep that root with an empty sum, `1 / sqrt(s_ii)`.
pub fn concord_estimate(s: &DMatrix<f64>, e: &EdgeStructure, eps: f64, max_iter: usize) -> Result<PrecisionEstimate> {
    validate_inputs(s, e, eps)?;
    let p = s.nrows();
    let keep = connected(e);
    let ss = submatrix(s, &keep);
    let sub = e.restrict(&keep);
    let q = keep.len();

    let mut w = DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 / ss[(i, i)].sqrt() } else { 0.0 });
    let edges: Vec<(usize, usize)> = (0..q)
        .flat_map(|i| ((i + 1)..q).map(move |j| (i, j)))
        .filter(|&(i, j)| sub.is_active(i, j))
        .collect();

    let mut converged = q == 0;
    let mut iterations = 0;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut change: f64 = 0.0;
        for &(i, j) in &edges {
            let old = w[(i, j)];
            // Full dot products minus the (i, j) term itself; w is zero off
            // the structure, so no masking is needed.
            let row_i: f64 = (0..q).map(|k| w[(i, k)] * ss[(j, k)]).sum::<f64>() - old * ss[(j, j)];
            let col_j: f64 = (0..q).map(|k| w[(k, j)] * ss[(i, k)]).sum::<f64>() - old * ss[(i, i)];
            let new = -(row_i + col_j) / (ss[(i, i)] + ss[(j, j)]);
            w[(i, j)] = new;
            w[(j, i)] = new;
            change = change.max((new - old).abs());
        }
        for i in 0..q {
            let old = w[(i, i)];
            let new = concord_diagonal(&w, &ss, i);
            w[(i, i)] = new;
            change = change.max((new - old).abs());
        }
        converged = change <= eps;
    }

    let omega_hat = repad(p, &keep, &w, |i| 1.0 / s[(i, i)].sqrt());
    let sigma_hat = invert(&omega_hat)?;
    Ok(PrecisionEstimate {
        omega_hat,
        sigma_hat,
        converged,
        iterations,
    })
}

fn concord_diagonal(w: &DMatrix<f64>, s: &DMatrix<f64>, i: usize) -> f64 {
    let sum: f64 = (0..w.nrows()).filter(|&j| j != i).map(|j| w[(i, j)] * s[(i, j)]).sum();
    (-sum + (sum * sum + 4.0 * s[(i, i)]).sqrt()) / (2.0 * s[(i, i)])
}

/// Largest violation of the CONCORD stationarity equations at `omega`.
pub fn concord_residual(s: &DMatrix<f64>, e: &EdgeStructure, omega: &DMatrix<f64>) -> f64 {
    let p = s.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        worst = worst.max((omega[(i, i)] - concord_diagonal(omega, s, i)).abs());
        for j in (i + 1)..p {
            if e.is_active(i, j) {
                let row_i: f64 = (0..p).filter(|&k| k != j).map(|k| omega[(i, k)] * s[(j, k)]).sum();
                let col_j: f64 = (0..p).filter(|&k| k != i).map(|k| omega[(k, j)] * s[(i, k)]).sum();
                let target = -(row_i + col_j) / (s[(i, i)] + s[(j, j)]);
                worst = worst.max((omega[(i, j)] - target).abs());
            } else {
                worst = worst.max(omega[(i, j)].abs());
            }
        }
    }
    worst
}

/// Gaussian-likelihood coordinate descent on the covariance `W`, with
/// precision zeros fixed by the structure.
///
/// Per feature j: solve `W11* beta* = s12*` over the active neighbours,
/// set `w12 = W11 beta`, then `theta22 = 1 / (s22 - w12' beta)` and
/// `theta12 = -beta theta22`. Stops when `sum |delta W| <= eps`.
pub fn gaussian_estimate(s: &DMatrix<f64>, e: &EdgeStructure, eps: f64, max_iter: usize) -> Result<PrecisionEstimate> {
    validate_inputs(s, e, eps)?;
    let p = s.nrows();
    let keep = connected(e);
    let ss = submatrix(s, &keep);
    let sub = e.restrict(&keep);
    let q = keep.len();
    let neighbors: Vec<Vec<usize>> = (0..q).map(|j| sub.neighbors(j)).collect();

    let mut w = ss.clone();
    let mut converged = q == 0;
    let mut iterations = 0;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut change = 0.0;
        for j in 0..q {
            let nb = &neighbors[j];
            let beta = solve_active(&w, &ss, nb, j, keep[j])?;
            for k in (0..q).filter(|&k| k != j) {
                let new: f64 = nb.iter().zip(beta.iter()).map(|(&m, b)| w[(k, m)] * b).sum();
                change += 2.0 * (new - w[(k, j)]).abs();
                w[(k, j)] = new;
                w[(j, k)] = new;
            }
        }
        converged = change <= eps;
    }

    let mut theta = DMatrix::zeros(q, q);
    for j in 0..q {
        let nb = &neighbors[j];
        let beta = solve_active(&w, &ss, nb, j, keep[j])?;
        let w12_beta: f64 = nb.iter().zip(beta.iter()).map(|(&m, b)| w[(m, j)] * b).sum();
        let theta22 = 1.0 / (ss[(j, j)] - w12_beta);
        theta[(j, j)] = theta22;
        for (&m, b) in nb.iter().zip(beta.iter()) {
            theta[(m, j)] = -b * theta22;
        }
    }
    linalg::symmetrize_in_place(&mut theta);

    let omega_hat = repad(p, &keep, &theta, |i| 1.0 / s[(i, i)]);
    let sigma_hat = repad(p, &keep, &w, |i| s[(i, i)]);
    Ok(PrecisionEstimate {
        omega_hat,
        sigma_hat,
        converged,
        iterations,
    })
}

/// `W11* beta = s12*` restricted to the active neighbours `nb` of `j`.
fn solve_active(w: &DMatrix<f64>, s: &DMatrix<f64>, nb: &[usize], j: usize, label: usize) -> Result<DVector<f64>> {
    let w11 = DMatrix::from_fn(nb.len(), nb.len(), |a, b| w[(nb[a], nb[b])]);
    let s12 = DVector::from_fn(nb.len(), |a, _| s[(nb[a], j)]);
    w11.cholesky()
        .map(|c| c.solve(&s12))
        .ok_or_else(|| ParsecError::Estimation(format!("singular W11 subsystem for feature {label}")))
}

/// `w = Omega 1 / (1' Omega 1)`, renormalized to sum to exactly one.
pub fn mvp_weights(sigma_inv: &DMatrix<f64>) -> Result<Vec<f64>> {
    if sigma_inv.nrows() != sigma_inv.ncols() || sigma_inv.nrows() == 0 {
        return Err(ParsecError::Dimension(format!(
            "precision matrix must be square and non-empty, got {:?}",
            sigma_inv.shape()
        )));
    }
    let raw: Vec<f64> = sigma_inv.row_iter().map(|r| r.sum()).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(ParsecError::InvalidArgument(format!(
            "1' Omega 1 = {total} is not positive"
        )));
    }
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}
