//! Iterative step-up FDR screening.
//!
//! Starting from the level where `P0 = alpha`, the level is raised to solve
//! `P0(rho_t) = alpha m_t / m0` with `m_t` the current exceedance count,
//! until the count stops changing. The fixed point is exactly the
//! Benjamini-Hochberg (or Benjamini-Yekutieli) rejection set, but only
//! entries above the first level are ever examined.

use rayon::prelude::*;

use crate::error::{ParsecError, Result};
use crate::inference::{DiscoveryModel, ErrorControlSpec, SphericalCapParams};
use crate::io::{Edge, EdgeSet};
use crate::parsec::ScaledPCorMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdrMethod {
    BenjaminiHochberg,
    BenjaminiYekutieli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdrOutcome {
    /// Final screening level; discoveries satisfy `|H_jk| > level`.
    pub level: f64,
    pub edges: EdgeSet,
    /// Number of level updates, including the initial one.
    pub iterations: usize,
}

/// `sum_{k=1}^m 1/k`.
pub fn harmonic_number(m: u64) -> f64 {
    if m <= 1_000_000 {
        // smallest terms first
        (1..=m).rev().map(|k| 1.0 / k as f64).sum()
    } else {
        let x = m as f64;
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x)
    }
}

/// Candidate `(j, k, h)` triples sorted by decreasing `|h|`.
struct Candidates {
    items: Vec<(usize, usize, f64)>,
}

impl Candidates {
    fn new(mut items: Vec<(usize, usize, f64)>) -> Self {
        items.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        Self { items }
    }

    /// `#{ |h| > rho }`.
    fn count_above(&self, rho: f64) -> usize {
        self.items.partition_point(|c| c.2.abs() > rho)
    }

    fn edges_above(&self, rho: f64, cap: &SphericalCapParams) -> Result<EdgeSet> {
        let m = self.count_above(rho);
        let edges = self.items[..m]
            .iter()
            .map(|&(j, k, h)| Edge::new(j, k, h, cap.p0(h.abs().min(1.0))))
            .collect();
        EdgeSet::new(edges)
    }
}

fn upper_candidates(h: &ScaledPCorMatrix, rho: f64) -> Vec<(usize, usize, f64)> {
    let p = h.p();
    let v = h.values();
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..p)
        .into_par_iter()
        .map(|j| {
            ((j + 1)..p)
                .filter_map(|k| {
                    let x = v[(j, k)];
                    (x.abs() > rho).then_some((j, k, x))
                })
                .collect()
        })
        .collect();
    rows.into_iter().flatten().collect()
}

fn require_symmetric(h: &ScaledPCorMatrix) -> Result<()> {
    if !h.is_symmetric() {
        return Err(ParsecError::InvalidArgument(
            "FDR screening needs a symmetrized matrix".into(),
        ));
    }
    Ok(())
}

fn method_of(spec: &ErrorControlSpec) -> Result<(FdrMethod, f64)> {
    spec.validate()?;
    match *spec {
        ErrorControlSpec::FdrBh { alpha } => Ok((FdrMethod::BenjaminiHochberg, alpha)),
        ErrorControlSpec::FdrBy { alpha } => Ok((FdrMethod::BenjaminiYekutieli, alpha)),
        other => Err(ParsecError::InvalidArgument(format!(
            "{} is not an FDR criterion",
            other.label()
        ))),
    }
}

/// Initial (most liberal) level: `P0(rho_0, n) = alpha`.
pub fn initial_level(alpha: f64, n: usize) -> Result<f64> {
    SphericalCapParams::new(n)?.solve_rho(alpha)
}

pub fn fdr_screen(h: &ScaledPCorMatrix, spec: &ErrorControlSpec, n: usize) -> Result<FdrOutcome> {
    require_symmetric(h)?;
    let (method, alpha) = method_of(spec)?;
    let rho0 = initial_level(alpha, n)?;
    fdr_from_candidates(upper_candidates(h, rho0), h.p(), method, alpha, n)
}

/// Runs the iteration on a pre-screened list holding every upper-triangle
/// entry with `|h|` above the initial level (see [`initial_level`]).
pub fn fdr_from_candidates(
    candidates: Vec<(usize, usize, f64)>,
    p: usize,
    method: FdrMethod,
    alpha: f64,
    n: usize,
) -> Result<FdrOutcome> {
    let model = DiscoveryModel::new(n, p)?;
    let cap = *model.cap();
    let tests = model.pairs();
    let m0 = match method {
        FdrMethod::BenjaminiHochberg => tests,
        FdrMethod::BenjaminiYekutieli => harmonic_number(tests as u64) * tests,
    };
    let cands = Candidates::new(candidates);

    let mut level = cap.solve_rho(alpha)?;
    let mut current = cands.count_above(level);
    let mut previous = m0;
    let mut iterations = 1;
    while current as f64 != previous && current > 0 {
        level = cap.solve_rho(current as f64 / m0 * alpha)?;
        previous = current as f64;
        current = cands.count_above(level);
        iterations += 1;
    }
    Ok(FdrOutcome {
        level,
        edges: cands.edges_above(level, &cap)?,
        iterations,
    })
}

/// pFDR screening: the BH iteration run at `alpha (1 - exp(-eta_p(rho)))`,
/// the FDR target inflated by the Poisson probability of at least one
/// null discovery at the current level.
pub fn pfdr_screen(h: &ScaledPCorMatrix, alpha: f64, n: usize) -> Result<FdrOutcome> {
    require_symmetric(h)?;
    ErrorControlSpec::PFdr { alpha }.validate()?;
    let rho0 = initial_level(alpha, n)?;
    pfdr_from_candidates(upper_candidates(h, rho0), h.p(), alpha, n)
}

pub fn pfdr_from_candidates(
    candidates: Vec<(usize, usize, f64)>,
    p: usize,
    alpha: f64,
    n: usize,
) -> Result<FdrOutcome> {
    let model = DiscoveryModel::new(n, p)?;
    let cap = *model.cap();
    let m0 = model.pairs();
    let cands = Candidates::new(candidates);

    let mut level = cap.solve_rho(alpha)?;
    let mut current = cands.count_above(level);
    let mut iterations = 1;
    // Level is non-decreasing; stop once both the count and the level settle.
    while current > 0 && iterations < 10_000 {
        let factor = -(-model.eta(level)).exp_m1();
        let target = current as f64 / m0 * alpha * factor;
        if !(target > 0.0) {
            level = 1.0;
            break;
        }
        let next = cap.solve_rho(target)?.max(level);
        let next_count = cands.count_above(next);
        iterations += 1;
        let settled = next_count == current && (next - level).abs() <= 1e-14;
        level = next;
        current = next_count;
        if settled {
            break;
        }
    }
    Ok(FdrOutcome {
        level,
        edges: cands.edges_above(level, &cap)?,
        iterations,
    })
}
