//! Error control for screening: null p-values, the Poisson model for the
//! number of false discoveries, and level selection for FWER, k-FWER, FDR
//! and pFDR.
//!
//! Under a diagonal covariance every off-diagonal `|H_jk|` exceeds `rho`
//! with probability exactly `P0(rho, n)`, and the number of exceedances
//! among the `p(p-1)/2` upper-triangle entries is approximately Poisson with
//! rate `eta_p(rho) = p(p-1) P0(rho, n) / 2`.

mod fdr;
mod poisson;
mod sphere;

pub use fdr::{fdr_from_candidates, fdr_screen, harmonic_number, pfdr_from_candidates, pfdr_screen, FdrMethod, FdrOutcome};
pub use poisson::{max_rate_for_tail, poisson_cdf, poisson_sf, tail_quantile, NORMAL_SWITCH};
pub use sphere::{cap_constant, pvalue, solve_rho_for_p0, spherical_cap_p0, SphericalCapParams};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ParsecError, Result};

/// Which error criterion drives the screening level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorControlSpec {
    Fwer { alpha: f64 },
    KFwer { alpha: f64, k: u64 },
    FdrBh { alpha: f64 },
    FdrBy { alpha: f64 },
    PFdr { alpha: f64 },
    RawLevel { rho: f64 },
}

impl ErrorControlSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(ParsecError::InvalidArgument(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        match *self {
            Self::Fwer { alpha }
            | Self::KFwer { alpha, .. }
            | Self::FdrBh { alpha }
            | Self::FdrBy { alpha }
            | Self::PFdr { alpha } => unit("alpha", alpha),
            Self::RawLevel { rho } => unit("rho", rho),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Self::Fwer { alpha }
            | Self::KFwer { alpha, .. }
            | Self::FdrBh { alpha }
            | Self::FdrBy { alpha }
            | Self::PFdr { alpha } => Some(alpha),
            Self::RawLevel { .. } => None,
        }
    }

    /// Tolerated false-discovery count for the k-FWER family.
    pub fn k(&self) -> Option<u64> {
        match *self {
            Self::Fwer { .. } => Some(0),
            Self::KFwer { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn is_fdr_family(&self) -> bool {
        matches!(self, Self::FdrBh { .. } | Self::FdrBy { .. } | Self::PFdr { .. })
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Fwer { alpha } => format!("fwer(alpha={alpha})"),
            Self::KFwer { alpha, k } => format!("kfwer(alpha={alpha},k={k})"),
            Self::FdrBh { alpha } => format!("fdr-bh(alpha={alpha})"),
            Self::FdrBy { alpha } => format!("fdr-by(alpha={alpha})"),
            Self::PFdr { alpha } => format!("pfdr(alpha={alpha})"),
            Self::RawLevel { rho } => format!("rho({rho})"),
        }
    }
}

/// Poisson model of the null discovery count for fixed (n, p).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscoveryModel {
    pub n: usize,
    pub p: usize,
    cap: SphericalCapParams,
}

impl DiscoveryModel {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if p < 2 {
            return Err(ParsecError::InvalidArgument(format!("need p >= 2, got {p}")));
        }
        Ok(Self {
            n,
            p,
            cap: SphericalCapParams::new(n)?,
        })
    }

    /// Number of upper-triangle hypotheses, `p(p-1)/2`.
    pub fn pairs(&self) -> f64 {
        self.p as f64 * (self.p as f64 - 1.0) / 2.0
    }

    pub fn cap(&self) -> &SphericalCapParams {
        &self.cap
    }

    /// `eta_p(rho) = p(p-1) P0(rho, n) / 2`.
    pub fn eta(&self, rho: f64) -> f64 {
        self.pairs() * self.cap.p0(rho)
    }
}

/// Screening level for FWER (k = 0) or k-FWER: the smallest `rho` with
/// `P(Poisson(eta_p(rho)) > k) <= alpha`. Returns 0 with a warning when the
/// control is vacuous (every entry may be declared).
pub fn fwer_kfwer_level(spec: &ErrorControlSpec, n: usize, p: usize) -> Result<f64> {
    spec.validate()?;
    let (alpha, k) = match *spec {
        ErrorControlSpec::Fwer { alpha } => (alpha, 0),
        ErrorControlSpec::KFwer { alpha, k } => (alpha, k),
        other => {
            return Err(ParsecError::InvalidArgument(format!(
                "{} is not an FWER-family criterion",
                other.label()
            )))
        }
    };
    let model = DiscoveryModel::new(n, p)?;
    let eta_star = max_rate_for_tail(k, alpha);
    let target = eta_star / model.pairs();
    if target >= 1.0 {
        warn!(
            "k-FWER control is vacuous: tolerated rate {eta_star:.3} exceeds {} hypotheses; using rho = 0",
            model.pairs()
        );
        return Ok(0.0);
    }
    model.cap.solve_rho(target)
}

/// Implied k-FWER `P(Poisson(eta_p(rho)) > k)` for a user-chosen level.
pub fn achieved_error(rho: f64, n: usize, p: usize, k: u64) -> Result<f64> {
    let model = DiscoveryModel::new(n, p)?;
    Ok(poisson_sf(k, model.eta(rho)))
}

/// Smallest false-discovery count k tolerated at level `rho` and error `alpha`.
pub fn implied_k(rho: f64, alpha: f64, n: usize, p: usize) -> Result<u64> {
    let model = DiscoveryModel::new(n, p)?;
    Ok(tail_quantile(model.eta(rho), alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::function::gamma::gamma_ur;

    #[test]
    fn spec_validation() {
        assert!(ErrorControlSpec::Fwer { alpha: 0.0 }.validate().is_err());
        assert!(ErrorControlSpec::FdrBh { alpha: 1.0 }.validate().is_err());
        assert!(ErrorControlSpec::RawLevel { rho: 1.2 }.validate().is_err());
        assert!(ErrorControlSpec::KFwer { alpha: 0.05, k: 0 }.validate().is_ok());
        assert!(fwer_kfwer_level(&ErrorControlSpec::FdrBh { alpha: 0.05 }, 10, 10).is_err());
    }

    #[test]
    fn eta_decreasing() {
        let m = DiscoveryModel::new(12, 300).unwrap();
        let mut prev = m.eta(0.0);
        for i in 1..100 {
            let e = m.eta(i as f64 / 100.0);
            assert!(e < prev);
            prev = e;
        }
        assert_eq!(m.eta(1.0), 0.0);
    }

    #[test]
    fn fwer_level_closed_form_n4() {
        let rho = fwer_kfwer_level(&ErrorControlSpec::Fwer { alpha: 0.05 }, 4, 100).unwrap();
        let want = 1.0 - 2.0 * (-(0.95f64).ln()) / 9900.0;
        assert_abs_diff_eq!(rho, want, epsilon = 1e-12);
    }

    #[test]
    fn kfwer_level_against_gamma_tail() {
        let (n, p, alpha, k) = (30, 1000, 0.05, 4995);
        let rho = fwer_kfwer_level(&ErrorControlSpec::KFwer { alpha, k }, n, p).unwrap();
        let eta = p as f64 * (p as f64 - 1.0) / 2.0 * spherical_cap_p0(rho, n).unwrap();
        let tail = 1.0 - gamma_ur(k as f64 + 1.0, eta);
        assert!((tail - alpha).abs() < 1e-6, "tail = {tail}");
    }

    #[test]
    fn vacuous_control_clamps_to_zero() {
        // Tolerating 60 of 45 hypotheses: the admissible rate exceeds the count.
        let rho = fwer_kfwer_level(&ErrorControlSpec::KFwer { alpha: 0.05, k: 60 }, 10, 10).unwrap();
        assert_eq!(rho, 0.0);
    }

    #[test]
    fn achieved_error_limits() {
        assert!(achieved_error(1.0 - 1e-12, 10, 100, 0).unwrap() < 1e-12);
        let rho = 0.7;
        let eta = DiscoveryModel::new(10, 100).unwrap().eta(rho);
        assert_abs_diff_eq!(achieved_error(rho, 10, 100, 0).unwrap(), 1.0 - (-eta).exp(), epsilon = 1e-14);
    }

    #[test]
    fn level_then_achieved_error_round_trips() {
        for (n, p, alpha, k) in [(30, 1000, 0.05, 0), (10, 200, 0.01, 3), (30, 1000, 0.05, 24_975)] {
            let rho = fwer_kfwer_level(&ErrorControlSpec::KFwer { alpha, k }, n, p).unwrap();
            let err = achieved_error(rho, n, p, k).unwrap();
            assert!((err - alpha).abs() < 1e-8, "n={n} p={p} k={k}: {err}");
        }
    }

    #[test]
    fn implied_k_cases() {
        let (n, p) = (10, 100);
        let model = DiscoveryModel::new(n, p).unwrap();
        assert_eq!(implied_k(0.999, 0.05, n, p).unwrap(), 0);
        assert!(model.eta(0.999) < -(0.95f64).ln());
        let rho2 = model.cap().solve_rho(2.0 / model.pairs()).unwrap();
        assert_eq!(implied_k(rho2, 1.0 - 1e-12, n, p).unwrap(), 0);
        let rho = model.cap().solve_rho(10.0 / model.pairs()).unwrap();
        assert_eq!(implied_k(rho, 0.5, n, p).unwrap(), 10);
    }
}
