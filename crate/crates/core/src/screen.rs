//! End-to-end screening: data to U-scores, to an estimate, to an edge list
//! under a chosen error criterion.
//!
//! Level criteria (FWER, k-FWER, raw level) declare `|value| >= rho`; the FDR
//! family declares `|value| > rho` at the fixed point of the step-up
//! iteration. PCS-Hub supports only the level criteria.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ParsecError, Result};
use crate::inference::{
    self, fdr_from_candidates, pfdr_from_candidates, DiscoveryModel, ErrorControlSpec, FdrMethod,
};
use crate::io::{DataMatrix, Edge, EdgeSet};
use crate::parsec::{self, RankOneWorkspace, ScaledPCorMatrix, SymmetrizeMode};
use crate::pcs_hub::{self, HubPCorMatrix};
use crate::uscore::{self, UScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ParsecBase,
    ParsecScalable,
    PcsHub,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ParsecBase => "parsec-base",
            Self::ParsecScalable => "parsec-scalable",
            Self::PcsHub => "pcs-hub",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ParsecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parsec-base" => Ok(Self::ParsecBase),
            "parsec-scalable" | "parsec" => Ok(Self::ParsecScalable),
            "pcs-hub" => Ok(Self::PcsHub),
            other => Err(ParsecError::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// A symmetric estimate ready for screening.
#[derive(Debug, Clone)]
pub enum Estimate {
    Parsec(ScaledPCorMatrix),
    Hub(HubPCorMatrix),
}

impl Estimate {
    pub fn values(&self) -> &DMatrix<f64> {
        match self {
            Self::Parsec(h) => h.values(),
            Self::Hub(h) => h.values(),
        }
    }

    pub fn p(&self) -> usize {
        self.values().nrows()
    }
}

/// Computes the estimate for `method`; PARSEC output is symmetrized by `mode`.
pub fn estimate_matrix(u: &UScoreMatrix, method: Method, mode: SymmetrizeMode) -> Result<Estimate> {
    Ok(match method {
        Method::ParsecBase => Estimate::Parsec(parsec::symmetrize(&parsec::parsec_base(u)?, mode)),
        Method::ParsecScalable => Estimate::Parsec(parsec::symmetrize(&parsec::parsec_scalable(u)?, mode)),
        Method::PcsHub => Estimate::Hub(pcs_hub::pcs_hub_matrix(u)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenConfig {
    pub method: Method,
    pub control: ErrorControlSpec,
    pub symmetrize: SymmetrizeMode,
    /// Stream the upper triangle instead of forming `p x p` matrices.
    pub low_memory: bool,
    /// Error level used for the implied-k diagnostic under a raw level.
    pub diagnostic_alpha: f64,
}

impl ScreenConfig {
    pub fn new(method: Method, control: ErrorControlSpec) -> Self {
        Self {
            method,
            control,
            symmetrize: SymmetrizeMode::UpperTriangle,
            low_memory: false,
            diagnostic_alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Poisson rate `eta_p(level)` of null exceedances.
    pub expected_null_discoveries: f64,
    /// `P(N > k)` for level criteria (k = 0 under a raw level); the
    /// estimated FDR `eta / max(R, 1)` (capped at 1) for the FDR family.
    pub achieved_error: f64,
    /// Smallest k with `P(N > k) <= alpha` at the chosen level.
    pub implied_k: u64,
    pub discoveries: usize,
    /// Step-up iterations (FDR family only).
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenOutcome {
    pub method: Method,
    pub control: ErrorControlSpec,
    pub n: usize,
    pub p: usize,
    pub level: f64,
    pub diagnostics: Diagnostics,
    pub edges: EdgeSet,
}

/// Level for FWER, k-FWER or a raw level; `None` for the FDR family.
pub fn fixed_level(control: &ErrorControlSpec, n: usize, p: usize) -> Result<Option<f64>> {
    control.validate()?;
    match *control {
        ErrorControlSpec::Fwer { .. } | ErrorControlSpec::KFwer { .. } => {
            inference::fwer_kfwer_level(control, n, p).map(Some)
        }
        ErrorControlSpec::RawLevel { rho } => Ok(Some(rho)),
        _ => Ok(None),
    }
}

/// Upper-triangle entries with `|v| >= level`, as edges with exact p-values.
pub fn edges_at_level(values: &DMatrix<f64>, n: usize, level: f64) -> Result<EdgeSet> {
    let cap = inference::SphericalCapParams::new(n)?;
    let p = values.nrows();
    let rows: Vec<Vec<Edge>> = (0..p)
        .into_par_iter()
        .map(|j| {
            ((j + 1)..p)
                .filter_map(|k| {
                    let h = values[(j, k)];
                    (h.abs() >= level).then(|| Edge::new(j, k, h, cap.p0(h.abs().min(1.0))))
                })
                .collect()
        })
        .collect();
    EdgeSet::new(rows.into_iter().flatten().collect())
}

fn reject_hub_fdr(method: Method, control: &ErrorControlSpec) -> Result<()> {
    if method == Method::PcsHub && control.is_fdr_family() {
        return Err(ParsecError::InvalidArgument(format!(
            "{} is not available for pcs-hub; use fwer, kfwer or a raw level",
            control.label()
        )));
    }
    Ok(())
}

fn diagnostics(
    cfg: &ScreenConfig,
    n: usize,
    p: usize,
    level: f64,
    discoveries: usize,
    iterations: Option<usize>,
) -> Result<Diagnostics> {
    let model = DiscoveryModel::new(n, p)?;
    let eta = model.eta(level);
    let alpha = cfg.control.alpha().unwrap_or(cfg.diagnostic_alpha);
    let achieved_error = match cfg.control {
        ErrorControlSpec::Fwer { .. } | ErrorControlSpec::KFwer { .. } => {
            inference::achieved_error(level, n, p, cfg.control.k().unwrap_or(0))?
        }
        ErrorControlSpec::RawLevel { .. } => inference::achieved_error(level, n, p, 0)?,
        _ => (eta / discoveries.max(1) as f64).min(1.0),
    };
    Ok(Diagnostics {
        expected_null_discoveries: eta,
        achieved_error,
        implied_k: inference::implied_k(level, alpha, n, p)?,
        discoveries,
        iterations,
    })
}

/// Screens an already computed symmetric estimate.
pub fn screen_estimate(estimate: &Estimate, n: usize, cfg: &ScreenConfig) -> Result<ScreenOutcome> {
    reject_hub_fdr(cfg.method, &cfg.control)?;
    let p = estimate.p();
    let (level, edges, iterations) = match fixed_level(&cfg.control, n, p)? {
        Some(level) => (level, edges_at_level(estimate.values(), n, level)?, None),
        None => {
            let Estimate::Parsec(h) = estimate else {
                return Err(ParsecError::InvalidArgument(format!(
                    "{} is not available for a pcs-hub estimate",
                    cfg.control.label()
                )));
            };
            let out = match cfg.control {
                ErrorControlSpec::PFdr { alpha } => inference::pfdr_screen(h, alpha, n)?,
                _ => inference::fdr_screen(h, &cfg.control, n)?,
            };
            (out.level, out.edges, Some(out.iterations))
        }
    };
    Ok(ScreenOutcome {
        method: cfg.method,
        control: cfg.control,
        n,
        p,
        level,
        diagnostics: diagnostics(cfg, n, p, level, edges.len(), iterations)?,
        edges,
    })
}

/// Rank-one screening that never forms a `p x p` matrix. Only the
/// upper-triangle symmetrization applies here; the edge set equals the dense
/// path's.
pub fn screen_low_memory(u: &UScoreMatrix, cfg: &ScreenConfig) -> Result<ScreenOutcome> {
    if cfg.method != Method::ParsecScalable {
        return Err(ParsecError::InvalidArgument(format!(
            "low-memory mode needs parsec-scalable, got {}",
            cfg.method
        )));
    }
    if cfg.symmetrize != SymmetrizeMode::UpperTriangle {
        return Err(ParsecError::InvalidArgument(
            "low-memory mode supports only upper-triangle symmetrization".into(),
        ));
    }
    let (n, p) = (u.n(), u.p());
    let ws = RankOneWorkspace::new(u)?;
    let cap = inference::SphericalCapParams::new(n)?;
    let (level, edges, iterations) = match fixed_level(&cfg.control, n, p)? {
        Some(level) => {
            let kept = parsec::scan_upper_with(&ws, |h| h.abs() >= level);
            let edges = kept
                .into_iter()
                .map(|(j, k, h)| Edge::new(j, k, h, cap.p0(h.abs().min(1.0))))
                .collect();
            (level, EdgeSet::new(edges)?, None)
        }
        None => {
            let alpha = cfg.control.alpha().expect("FDR criteria carry alpha");
            let rho0 = inference::solve_rho_for_p0(alpha, n)?;
            let candidates = parsec::scan_upper_with(&ws, |h| h.abs() > rho0);
            let out = match cfg.control {
                ErrorControlSpec::FdrBh { .. } => {
                    fdr_from_candidates(candidates, p, FdrMethod::BenjaminiHochberg, alpha, n)?
                }
                ErrorControlSpec::FdrBy { .. } => {
                    fdr_from_candidates(candidates, p, FdrMethod::BenjaminiYekutieli, alpha, n)?
                }
                _ => pfdr_from_candidates(candidates, p, alpha, n)?,
            };
            (out.level, out.edges, Some(out.iterations))
        }
    };
    Ok(ScreenOutcome {
        method: cfg.method,
        control: cfg.control,
        n,
        p,
        level,
        diagnostics: diagnostics(cfg, n, p, level, edges.len(), iterations)?,
        edges,
    })
}

pub fn screen_uscores(u: &UScoreMatrix, cfg: &ScreenConfig) -> Result<ScreenOutcome> {
    reject_hub_fdr(cfg.method, &cfg.control)?;
    cfg.control.validate()?;
    if cfg.low_memory {
        return screen_low_memory(u, cfg);
    }
    let estimate = estimate_matrix(u, cfg.method, cfg.symmetrize)?;
    screen_estimate(&estimate, u.n(), cfg)
}

pub fn screen_data(data: &DataMatrix, cfg: &ScreenConfig) -> Result<ScreenOutcome> {
    screen_uscores(&uscore::uscores(data)?, cfg)
}
