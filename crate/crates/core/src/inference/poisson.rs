//! Poisson tail arithmetic for the discovery-count approximation.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

/// Rates above this use the continuity-corrected normal approximation.
pub const NORMAL_SWITCH: f64 = 1e5;

fn ln_pmf(i: u64, eta: f64) -> f64 {
    -eta + i as f64 * eta.ln() - ln_gamma(i as f64 + 1.0)
}

/// `P(N > k)` for `N ~ Poisson(eta)`.
pub fn poisson_sf(k: u64, eta: f64) -> f64 {
    if !(eta > 0.0) {
        return 0.0;
    }
    if eta > NORMAL_SWITCH {
        let z = (k as f64 + 0.5 - eta) / eta.sqrt();
        return 0.5 * erfc(z / std::f64::consts::SQRT_2);
    }
    if (k as f64) >= eta {
        // Upper tail directly; terms decay geometrically past the mode.
        let mut i = k + 1;
        let mut term = ln_pmf(i, eta).exp();
        let mut sum = 0.0;
        while term > 0.0 {
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            i += 1;
            term *= eta / i as f64;
        }
        sum.min(1.0)
    } else {
        1.0 - poisson_cdf_below_mode(k, eta)
    }
}

/// `P(N <= k)` for `k < eta`, summed downward from k.
fn poisson_cdf_below_mode(k: u64, eta: f64) -> f64 {
    let mut i = k;
    let mut term = ln_pmf(i, eta).exp();
    let mut sum = 0.0;
    loop {
        sum += term;
        if i == 0 || term < sum * 1e-17 {
            break;
        }
        term *= i as f64 / eta;
        i -= 1;
    }
    sum.min(1.0)
}

pub fn poisson_cdf(k: u64, eta: f64) -> f64 {
    1.0 - poisson_sf(k, eta)
}

/// `sup { eta : P(Poisson(eta) > k) <= alpha }`.
pub fn max_rate_for_tail(k: u64, alpha: f64) -> f64 {
    if k == 0 {
        // 1 - exp(-eta) = alpha
        return -(-alpha).ln_1p();
    }
    let mut lo = 0.0f64;
    let mut hi = (k as f64 + 1.0).max(1.0);
    while poisson_sf(k, hi) <= alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if poisson_sf(k, mid) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest k with `P(Poisson(eta) > k) <= alpha`.
pub fn tail_quantile(eta: f64, alpha: f64) -> u64 {
    if poisson_sf(0, eta) <= alpha {
        return 0;
    }
    let mut lo = 0u64;
    let mut hi = (eta + 10.0 * eta.sqrt() + 10.0).ceil() as u64;
    while poisson_sf(hi, eta) > alpha {
        lo = hi;
        hi *= 2;
    }
    // invariant: sf(lo) > alpha >= sf(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if poisson_sf(mid, eta) <= alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::function::gamma::gamma_ur;

    /// `P(N > k) = 1 - Q(k+1, eta)` where Q is the upper regularized gamma.
    fn gamma_oracle(k: u64, eta: f64) -> f64 {
        1.0 - gamma_ur(k as f64 + 1.0, eta)
    }

    #[test]
    fn zero_class() {
        for eta in [1e-6, 0.05, 1.0, 7.5] {
            assert_abs_diff_eq!(poisson_sf(0, eta), 1.0 - (-eta).exp(), epsilon = 1e-14);
        }
        assert_eq!(poisson_sf(3, 0.0), 0.0);
    }

    #[test]
    fn agrees_with_incomplete_gamma() {
        for &eta in &[0.3, 2.0, 10.0, 57.0, 1000.0, 25_000.0] {
            let center = eta as u64;
            for k in [0, center / 2, center, center + 1, center * 2 + 3] {
                let got = poisson_sf(k, eta);
                let want = gamma_oracle(k, eta);
                assert_abs_diff_eq!(got, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn small_upper_tail_keeps_relative_precision() {
        // P(N > 30 | eta = 2) by explicit term summation.
        let mut want = 0.0;
        for i in 31..200u64 {
            want += ln_pmf(i, 2.0).exp();
        }
        let got = poisson_sf(30, 2.0);
        assert!(((got - want) / want).abs() < 1e-12);
    }

    #[test]
    fn fwer_rate_closed_form() {
        for alpha in [0.01, 0.05, 0.5] {
            let want = -(1.0f64 - alpha).ln();
            assert!((max_rate_for_tail(0, alpha) - want).abs() < 1e-15 * want);
        }
    }

    #[test]
    fn rate_solver_is_tight() {
        for (k, alpha) in [(1u64, 0.05), (5, 0.01), (100, 0.05), (4995, 0.05), (24_975, 0.05)] {
            let eta = max_rate_for_tail(k, alpha);
            assert!(poisson_sf(k, eta) <= alpha);
            assert!((gamma_oracle(k, eta) - alpha).abs() < 1e-8);
        }
    }

    #[test]
    fn quantile_against_direct_cdf() {
        let (eta, alpha) = (10.0, 0.5);
        let q = tail_quantile(eta, alpha);
        // Direct summation of the pmf.
        let mut cdf = 0.0;
        let mut want = 0;
        for i in 0..100u64 {
            cdf += (-eta + i as f64 * eta.ln() - ln_gamma(i as f64 + 1.0)).exp();
            if 1.0 - cdf <= alpha {
                want = i;
                break;
            }
        }
        assert_eq!(q, want);
        assert_eq!(q, 10);
    }

    #[test]
    fn quantile_edge_cases() {
        assert_eq!(tail_quantile(0.01, 0.05), 0);
        // alpha above P(N > 0) = 1 - exp(-2) tolerates nothing.
        assert_eq!(tail_quantile(2.0, 1.0 - 1e-12), 0);
        let q = tail_quantile(2e5, 0.05);
        assert!(poisson_sf(q, 2e5) <= 0.05 && poisson_sf(q - 1, 2e5) > 0.05);
    }

    #[test]
    fn normal_branch_is_close_to_exact_at_switch() {
        let eta = NORMAL_SWITCH * 1.0001;
        let k = (eta + 2.0 * eta.sqrt()) as u64;
        assert_abs_diff_eq!(poisson_sf(k, eta), gamma_oracle(k, eta), epsilon = 1e-3);
    }
}
