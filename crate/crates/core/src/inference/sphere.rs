//! Spherical cap probability `P0(rho, n)`: the chance that a uniform point
//! on the sphere in R^{n-1} has absolute inner product above `rho` with a
//! fixed unit vector. It is the exact null tail of a scaled partial
//! correlation.
//!
//! `P0(rho, n) = a_n * int_rho^1 (1 - u^2)^{(n-4)/2} du`, evaluated after the
//! substitution `u = cos(theta)` as `a_n * int_0^{acos rho} sin^{n-3}(theta)`,
//! which is smooth for every n >= 3.

use crate::error::{ParsecError, Result};

/// `a_n = 2 Gamma((n-1)/2) / (sqrt(pi) Gamma((n-2)/2))`.
///
/// Built from the ratio recurrence `g(n+2) = g(n) (n-1)/(n-2)` so that
/// `a_3 = 2/pi` and `a_4 = 1` come out exact.
pub fn cap_constant(n: usize) -> Result<f64> {
    check_n(n)?;
    let (mut m, mut ratio) = if n % 2 == 1 {
        (3usize, 1.0 / std::f64::consts::PI.sqrt())
    } else {
        (4usize, std::f64::consts::PI.sqrt() / 2.0)
    };
    while m < n {
        ratio *= (m as f64 - 1.0) / (m as f64 - 2.0);
        m += 2;
    }
    Ok(2.0 * ratio / std::f64::consts::PI.sqrt())
}

fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(ParsecError::InvalidArgument(format!(
            "spherical cap probability needs n >= 3, got {n}"
        )));
    }
    Ok(())
}

/// Precomputed constants for a fixed sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCapParams {
    pub n: usize,
    pub a_n: f64,
}

impl SphericalCapParams {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            a_n: cap_constant(n)?,
        })
    }

    /// `P0(rho, n)` for `rho` in [0, 1].
    pub fn p0(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 1.0;
        }
        if rho >= 1.0 {
            return 0.0;
        }
        // acos(rho) via 1 - rho keeps precision close to rho = 1.
        let theta = 2.0 * ((1.0 - rho) / 2.0).sqrt().asin();
        let power = (self.n - 3) as i32;
        let integral = adaptive_gauss_kronrod(&|t: f64| t.sin().powi(power), 0.0, theta);
        (self.a_n * integral).clamp(0.0, 1.0)
    }
}

pub fn spherical_cap_p0(rho: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(ParsecError::InvalidArgument(format!(
            "screening level {rho} outside [0, 1]"
        )));
    }
    Ok(SphericalCapParams::new(n)?.p0(rho))
}

/// Exact marginal p-value of a scaled partial correlation under the null.
pub fn pvalue(h: f64, n: usize) -> Result<f64> {
    if !(h.abs() <= 1.0 + crate::parsec::BOUND_SLACK) {
        return Err(ParsecError::InvalidArgument(format!(
            "statistic {h} outside [-1, 1]"
        )));
    }
    Ok(SphericalCapParams::new(n)?.p0(h.abs().min(1.0)))
}

impl SphericalCapParams {
    /// Level `rho` with `P0(rho, n) = target`, by bisection.
    pub fn solve_rho(&self, target: f64) -> Result<f64> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(ParsecError::InvalidArgument(format!(
                "target probability {target} outside (0, 1]"
            )));
        }
        if target == 1.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.p0(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Either endpoint brackets the target to within one ulp in rho.
        let (plo, phi) = (self.p0(lo), self.p0(hi));
        Ok(if (plo - target).abs() <= (phi - target).abs() {
            lo
        } else {
            hi
        })
    }
}

pub fn solve_rho_for_p0(target: f64, n: usize) -> Result<f64> {
    SphericalCapParams::new(n)?.solve_rho(target)
}

// Gauss-Kronrod 7/15 nodes on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = half * XGK[i];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * sum;
        if i % 2 == 1 {
            gauss += WG[i / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive bisection until each panel's Kronrod/Gauss gap is below
/// `1e-15` absolute or `1e-13` relative.
pub(crate) fn adaptive_gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), depth: u32) -> f64 {
        let (value, err) = whole;
        if err <= 1e-15f64.max(1e-13 * value.abs()) || depth >= 40 {
            return value;
        }
        let mid = 0.5 * (a + b);
        let left = gk15(f, a, mid);
        let right = gk15(f, mid, b);
        recurse(f, a, mid, left, depth + 1) + recurse(f, mid, b, right, depth + 1)
    }
    if b <= a {
        return 0.0;
    }
    recurse(f, a, b, gk15(f, a, b), 0)
}
