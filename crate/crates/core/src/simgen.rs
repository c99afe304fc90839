//! Covariance structures for simulation and Gaussian / multivariate-t sampling.
//!
//! Every structure confines its dependence to the first `b` features; the
//! remaining `p - b` features are independent with unit variance. Only the
//! `b x b` block is stored, so null designs scale to any `p`.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ParsecError, Result};
use crate::io::DataMatrix;
use crate::linalg;
use crate::parallel;

/// Off-diagonal precision entries at or below this magnitude are non-edges.
pub const EDGE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructureSpec {
    Diagonal { p: usize },
    /// First `a` features follow an AR(`d`) process with coefficients
    /// `(phi1, (1 - phi1)/(d - 1), ...)`, standardized to unit variance.
    ArBlock { p: usize, a: usize, d: usize, phi1: f64 },
    /// Equicorrelation `rho` among the first `a` features.
    Block { p: usize, a: usize, rho: f64 },
    /// `k_stars` hubs, each with `e` leaves, precision entry `c` on every
    /// hub-leaf pair and on consecutive hub pairs.
    StarConnected { p: usize, k_stars: usize, e: usize, c: f64 },
    StarDisconnected { p: usize, k_stars: usize, e: usize, c: f64 },
}

impl StructureSpec {
    pub fn p(&self) -> usize {
        match *self {
            Self::Diagonal { p }
            | Self::ArBlock { p, .. }
            | Self::Block { p, .. }
            | Self::StarConnected { p, .. }
            | Self::StarDisconnected { p, .. } => p,
        }
    }

    /// Number of leading features carrying dependence.
    pub fn block_dim(&self) -> usize {
        match *self {
            Self::Diagonal { .. } => 0,
            Self::ArBlock { a, .. } | Self::Block { a, .. } => a,
            Self::StarConnected { k_stars, e, .. } | Self::StarDisconnected { k_stars, e, .. } => {
                k_stars * (e + 1)
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Diagonal { p } => format!("diag(p={p})"),
            Self::ArBlock { p, a, d, phi1 } => format!("ar-block(p={p},a={a},d={d},phi1={phi1})"),
            Self::Block { p, a, rho } => format!("block(p={p},a={a},rho={rho})"),
            Self::StarConnected { p, k_stars, e, c } => {
                format!("star-connected(p={p},k={k_stars},e={e},c={c})")
            }
            Self::StarDisconnected { p, k_stars, e, c } => {
                format!("star-disconnected(p={p},k={k_stars},e={e},c={c})")
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ParsecError::InvalidArgument(msg));
        let p = self.p();
        if p == 0 {
            return bad("p must be positive".into());
        }
        match *self {
            Self::Diagonal { .. } => {}
            Self::ArBlock { a, d, phi1, .. } => {
                if d == 0 {
                    return bad("AR order d must be at least 1".into());
                }
                if !(phi1.abs() < 1.0) {
                    return bad(format!("phi1 = {phi1} must satisfy |phi1| < 1"));
                }
                if a == 0 {
                    return bad("block size a must be positive".into());
                }
            }
            Self::Block { a, rho, .. } => {
                if !(rho.abs() < 1.0) {
                    return bad(format!("rho = {rho} must satisfy |rho| < 1"));
                }
                if a == 0 {
                    return bad("block size a must be positive".into());
                }
            }
            Self::StarConnected { k_stars, c, .. } | Self::StarDisconnected { k_stars, c, .. } => {
                if k_stars == 0 {
                    return bad("need at least one star".into());
                }
                if !c.is_finite() {
                    return bad(format!("c = {c} must be finite"));
                }
            }
        }
        if self.block_dim() > p {
            return bad(format!(
                "{} needs {} structured features but p = {p}",
                self.label(),
                self.block_dim()
            ));
        }
        Ok(())
    }
}

/// Population covariance, its inverse and the partial-correlation graph.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    p: usize,
    sigma_block: DMatrix<f64>,
    omega_block: DMatrix<f64>,
    /// Lower Cholesky factor of `sigma_block`.
    factor: DMatrix<f64>,
    true_edges: Vec<(usize, usize)>,
}

impl CovarianceModel {
    fn from_block(p: usize, sigma_block: DMatrix<f64>, omega_block: DMatrix<f64>) -> Result<Self> {
        let b = sigma_block.nrows();
        let factor = match Cholesky::new(sigma_block.clone()) {
            Some(ch) => ch.l(),
            None => {
                return Err(ParsecError::NotPositiveDefinite {
                    min_eigenvalue: linalg::min_eigenvalue(&sigma_block),
                    detail: "covariance block".into(),
                })
            }
        };
        let mut true_edges = Vec::new();
        for j in 0..b {
            for k in (j + 1)..b {
                if omega_block[(j, k)].abs() > EDGE_TOLERANCE {
                    true_edges.push((j, k));
                }
            }
        }
        Ok(Self {
            p,
            sigma_block,
            omega_block,
            factor,
            true_edges,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn block_dim(&self) -> usize {
        self.sigma_block.nrows()
    }

    pub fn sigma_block(&self) -> &DMatrix<f64> {
        &self.sigma_block
    }

    pub fn omega_block(&self) -> &DMatrix<f64> {
        &self.omega_block
    }

    /// Dense `p x p` covariance.
    pub fn sigma(&self) -> DMatrix<f64> {
        self.embed(&self.sigma_block)
    }

    /// Dense `p x p` precision.
    pub fn omega(&self) -> DMatrix<f64> {
        self.embed(&self.omega_block)
    }

    fn embed(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let b = block.nrows();
        let mut out = DMatrix::identity(self.p, self.p);
        out.view_mut((0, 0), (b, b)).copy_from(block);
        out
    }

    /// Pairs `(j, k)`, `j < k`, with non-zero partial correlation.
    pub fn true_edges(&self) -> &[(usize, usize)] {
        &self.true_edges
    }
}

pub fn build_structure(spec: &StructureSpec) -> Result<CovarianceModel> {
    spec.validate()?;
    let p = spec.p();
    let (sigma, omega) = match *spec {
        StructureSpec::Diagonal { .. } => (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)),
        StructureSpec::ArBlock { a, d, phi1, .. } => ar_block(a, &ar_coefficients(d, phi1))?,
        StructureSpec::Block { a, rho, .. } => equicorrelation(a, rho)?,
        StructureSpec::StarConnected { k_stars, e, c, .. } => star(k_stars, e, c, true, spec)?,
        StructureSpec::StarDisconnected { k_stars, e, c, .. } => star(k_stars, e, c, false, spec)?,
    };
    CovarianceModel::from_block(p, sigma, omega)
}

/// `(phi1, (1 - phi1)/(d - 1) repeated d - 1 times)`.
pub fn ar_coefficients(d: usize, phi1: f64) -> Vec<f64> {
    let mut coef = vec![phi1];
    if d > 1 {
        let rest = (1.0 - phi1) / (d - 1) as f64;
        coef.extend(std::iter::repeat_n(rest, d - 1));
    }
    coef
}

/// Reflection coefficients by Levinson step-down; `None` when some
/// `|kappa| >= 1`, i.e. the recursion has a root on or inside the unit circle.
pub fn reflection_coefficients(coef: &[f64]) -> Option<Vec<f64>> {
    let mut a = coef.to_vec();
    let mut kappas = vec![0.0; a.len()];
    for m in (1..=a.len()).rev() {
        let kappa = a[m - 1];
        if !(kappa.abs() < 1.0) {
            return None;
        }
        kappas[m - 1] = kappa;
        let denom = 1.0 - kappa * kappa;
        let prev: Vec<f64> = (0..m - 1).map(|i| (a[i] + kappa * a[m - 2 - i]) / denom).collect();
        a = prev;
    }
    Some(kappas)
}

/// Stationary autocovariances `gamma(0..len)` of `x_t = sum a_i x_{t-i} + e_t`
/// with unit innovation variance, from the Yule-Walker equations.
pub fn stationary_autocovariance(coef: &[f64], len: usize) -> Result<Vec<f64>> {
    let d = coef.len();
    // rho(h) - sum_i a_i rho(|h - i|) = 0, h = 1..d, with rho(0) = 1.
    let mut m = DMatrix::<f64>::zeros(d, d);
    let mut rhs = nalgebra::DVector::<f64>::zeros(d);
    for h in 1..=d {
        m[(h - 1, h - 1)] += 1.0;
        for (i, &ai) in coef.iter().enumerate() {
            let lag = (h as isize - (i as isize + 1)).unsigned_abs();
            if lag == 0 {
                rhs[h - 1] += ai;
            } else {
                m[(h - 1, lag - 1)] -= ai;
            }
        }
    }
    let rho = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ParsecError::Estimation("singular Yule-Walker system".into()))?;
    let mut acf = vec![1.0];
    acf.extend(rho.iter().copied());
    while acf.len() < len.max(d + 1) {
        let h = acf.len();
        acf.push(coef.iter().enumerate().map(|(i, &ai)| ai * acf[h - 1 - i]).sum());
    }
    let gamma0 = 1.0 / (1.0 - coef.iter().zip(&acf[1..]).map(|(a, r)| a * r).sum::<f64>());
    acf.truncate(len);
    Ok(acf.into_iter().map(|r| r * gamma0).collect())
}

/// Length-`a` segment of an AR process. With `L x = eta` (eta white), the
/// precision `L^T L` is banded with bandwidth `d` by construction. A
/// stationary recursion starts from its stationary law; a non-stationary one
/// starts from zero.
fn ar_block(a: usize, coef: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = coef.len();
    let mut l = DMatrix::<f64>::zeros(a, a);
    let head = if reflection_coefficients(coef).is_some() {
        let m0 = d.min(a);
        let gamma = stationary_autocovariance(coef, m0)?;
        let toeplitz = DMatrix::from_fn(m0, m0, |i, j| gamma[i.abs_diff(j)]);
        let c = Cholesky::new(toeplitz).ok_or_else(|| ParsecError::NotPositiveDefinite {
            min_eigenvalue: f64::NAN,
            detail: "stationary AR initial block".into(),
        })?;
        let c_inv = c
            .l()
            .solve_lower_triangular(&DMatrix::identity(m0, m0))
            .expect("Cholesky factor has a positive diagonal");
        l.view_mut((0, 0), (m0, m0)).copy_from(&c_inv);
        m0
    } else {
        0
    };
    for t in head..a {
        l[(t, t)] = 1.0;
        for (i, &ai) in coef.iter().enumerate() {
            if t > i {
                l[(t, t - 1 - i)] = -ai;
            }
        }
    }
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(a, a))
        .expect("unit-diagonal triangular factor");
    let sigma = &l_inv * l_inv.transpose();
    let omega = l.transpose() * &l;
    Ok(standardize_pair(sigma, omega))
}

/// Rescales to unit variances: `D Sigma D` and `D^{-1} Omega D^{-1}`.
fn standardize_pair(mut sigma: DMatrix<f64>, mut omega: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = sigma.nrows();
    let scale: Vec<f64> = (0..b).map(|i| sigma[(i, i)].sqrt()).collect();
    for j in 0..b {
        for i in 0..b {
            sigma[(i, j)] /= scale[i] * scale[j];
            omega[(i, j)] *= scale[i] * scale[j];
        }
        sigma[(j, j)] = 1.0;
    }
    linalg::symmetrize_in_place(&mut sigma);
    linalg::symmetrize_in_place(&mut omega);
    (sigma, omega)
}

fn equicorrelation(a: usize, rho: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let denom = 1.0 + (a as f64 - 1.0) * rho;
    if !(denom > 0.0) {
        return Err(ParsecError::NotPositiveDefinite {
            min_eigenvalue: (1.0 - rho).min(denom),
            detail: format!("block with a = {a}, rho = {rho}"),
        });
    }
    let sigma = DMatrix::from_fn(a, a, |i, j| if i == j { 1.0 } else { rho });
    let off = -rho / ((1.0 - rho) * denom);
    let diag = 1.0 / (1.0 - rho) + off;
    let omega = DMatrix::from_fn(a, a, |i, j| if i == j { diag } else { off });
    Ok((sigma, omega))
}

fn star(k_stars: usize, e: usize, c: f64, connected: bool, spec: &StructureSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let b = k_stars * (e + 1);
    let mut omega = DMatrix::<f64>::identity(b, b);
    for s in 0..k_stars {
        let hub = s * (e + 1);
        for leaf in (hub + 1)..=(hub + e) {
            omega[(hub, leaf)] = c;
            omega[(leaf, hub)] = c;
        }
        if connected && s + 1 < k_stars {
            let next = hub + e + 1;
            omega[(hub, next)] = c;
            omega[(next, hub)] = c;
        }
    }
    let not_pd = || ParsecError::NotPositiveDefinite {
        min_eigenvalue: linalg::min_eigenvalue(&omega),
        detail: spec.label(),
    };
    let chol = Cholesky::new(omega.clone()).ok_or_else(not_pd)?;
    let mut sigma = chol.inverse();
    linalg::symmetrize_in_place(&mut sigma);
    Ok((sigma, omega))
}

/// `n` i.i.d. rows `L z`, z standard normal, drawn row by row from `seed`.
pub fn sample_gaussian(model: &CovarianceModel, n: usize, seed: u64) -> Result<DataMatrix> {
    sample(model, n, seed, None)
}

/// Multivariate t: `L z / sqrt(w / nu)` with `w ~ chi-square(nu)` per row.
pub fn sample_mvt(model: &CovarianceModel, nu: f64, n: usize, seed: u64) -> Result<DataMatrix> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(ParsecError::InvalidArgument(format!("nu = {nu} must be positive")));
    }
    sample(model, n, seed, Some(nu))
}

fn sample(model: &CovarianceModel, n: usize, seed: u64, nu: Option<f64>) -> Result<DataMatrix> {
    let p = model.p;
    let b = model.block_dim();
    let mut rng = parallel::rng(seed);
    let chi = nu.map(|nu| ChiSquared::new(nu).expect("validated degrees of freedom"));
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut z = vec![0.0; p];
    for i in 0..n {
        for slot in z.iter_mut() {
            *slot = rng.sample(StandardNormal);
        }
        let scale = chi.map_or(1.0, |chi| {
            let w: f64 = rng.sample(chi);
            1.0 / (w / nu.unwrap()).sqrt()
        });
        for r in 0..b {
            let acc: f64 = z[..=r].iter().enumerate().map(|(c, zc)| model.factor[(r, c)] * zc).sum();
            x[(i, r)] = acc * scale;
        }
        for j in b..p {
            x[(i, j)] = z[j] * scale;
        }
    }
    DataMatrix::new(x, None)
}
