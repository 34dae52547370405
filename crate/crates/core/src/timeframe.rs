//! Conformal time τ against cosmological time t, and the scale factor.
//!
//! Flat slices: `a = τ²`, `t = τ³/3`. Hyperbolic slices: `a = cosh τ − 1`,
//! `t = sinh τ − τ`. Both time maps are odd and strictly increasing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Curvature;

const MAX_ITERATIONS: usize = 200;
const TAU_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalTime {
    pub tau: f64,
    pub curvature: Curvature,
}

impl ConformalTime {
    pub fn new(tau: f64, curvature: Curvature) -> Self {
        ConformalTime { tau, curvature }
    }

    pub fn to_t(self) -> f64 {
        tau_to_t(self)
    }

    pub fn scale_factor(self) -> f64 {
        scale_factor(self)
    }
}

/// `sinh τ − τ` without cancellation for small `τ`.
fn sinh_minus_id(tau: f64) -> f64 {
    if tau.abs() < 1.0 {
        // Taylor series: τ³/3! + τ⁵/5! + ...; 12 terms reach round-off on |τ| < 1.
        let t2 = tau * tau;
        let mut term = tau * t2 / 6.0;
        let mut sum = term;
        let mut k = 3.0;
        while term.abs() > f64::EPSILON * sum.abs() * 0.25 {
            term *= t2 / ((k + 1.0) * (k + 2.0));
            sum += term;
            k += 2.0;
        }
        sum
    } else {
        tau.sinh() - tau
    }
}

/// `cosh τ − 1`, accurate near zero.
fn cosh_minus_one(tau: f64) -> f64 {
    let h = (0.5 * tau).sinh();
    2.0 * h * h
}

pub fn tau_to_t(time: ConformalTime) -> f64 {
    let tau = time.tau;
    match time.curvature {
        Curvature::Flat => tau * tau * tau / 3.0,
        Curvature::Hyperbolic => sinh_minus_id(tau),
    }
}

pub fn scale_factor(time: ConformalTime) -> f64 {
    let tau = time.tau;
    match time.curvature {
        Curvature::Flat => tau * tau,
        Curvature::Hyperbolic => cosh_minus_one(tau),
    }
}

/// Inverse of [`tau_to_t`].
pub fn t_to_tau(t: f64, curvature: Curvature) -> Result<ConformalTime> {
    if !t.is_finite() {
        return Err(Error::invalid("t", format!("must be finite, got {t}")));
    }
    let tau = match curvature {
        Curvature::Flat => (3.0 * t).cbrt(),
        Curvature::Hyperbolic => {
            // Odd function: solve for |t| and restore the sign.
            let target = t.abs();
            t.signum() * invert_sinh_minus_id(target)?
        }
    };
    Ok(ConformalTime::new(tau, curvature))
}

/// Solves `sinh τ − τ = t` for `t ≥ 0` with Newton steps kept inside a
/// bisection bracket.
fn invert_sinh_minus_id(t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let seed = if t < 1.0 { (6.0 * t).cbrt() } else { t.asinh() };

    let mut lo = 0.0;
    let mut hi = seed.max(1e-300);
    while sinh_minus_id(hi) < t {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NumericalFailure(format!("no bracket for t = {t}")));
        }
    }

    let mut tau = seed.clamp(lo, hi);
    for _ in 0..MAX_ITERATIONS {
        let residual = sinh_minus_id(tau) - t;
        if residual == 0.0 {
            return Ok(tau);
        }
        if residual > 0.0 {
            hi = tau;
        } else {
            lo = tau;
        }
        let slope = cosh_minus_one(tau);
        let mut next = tau - residual / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - tau).abs();
        tau = next;
        if step <= TAU_TOLERANCE * tau.max(1.0) * 1e-3 || hi - lo <= TAU_TOLERANCE * tau.max(1.0) * 1e-3 {
            return Ok(tau);
        }
    }
    Err(Error::NumericalFailure(format!(
        "inverse time map did not converge for t = {t} after {MAX_ITERATIONS} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use Curvature::{Flat, Hyperbolic};

    fn ct(tau: f64, k: Curvature) -> ConformalTime {
        ConformalTime::new(tau, k)
    }

    #[test]
    fn forward_examples() {
        assert_eq!(tau_to_t(ct(3.0, Flat)), 9.0);
        assert_eq!(tau_to_t(ct(0.0, Hyperbolic)), 0.0);
        assert_relative_eq!(tau_to_t(ct(2.0, Hyperbolic)), 2f64.sinh() - 2.0, max_relative = 1e-15);
        assert_relative_eq!(tau_to_t(ct(2.0, Hyperbolic)), 1.626_860_407_847_019, epsilon = 1e-12);
    }

    #[test]
    fn small_tau_series_matches_leading_terms() {
        for tau in [1e-6f64, 1e-3, 0.1, -0.3] {
            let series = tau * tau * tau / 6.0 + tau.powi(5) / 120.0;
            let t = tau_to_t(ct(tau, Hyperbolic));
            assert!((t - series).abs() <= 2e-4 * tau.abs().powi(7) + 4.0 * f64::EPSILON * t.abs());
            assert!((t - tau.powi(3) / 6.0).abs() <= tau.abs().powi(5));
        }
        // Continuity at the series/direct switch.
        let below = tau_to_t(ct(1.0 - 1e-12, Hyperbolic));
        let above = tau_to_t(ct(1.0, Hyperbolic));
        assert!((above - below).abs() < 1e-11);
    }

    #[test]
    fn inverse_examples() {
        assert_relative_eq!(t_to_tau(9.0, Flat).unwrap().tau, 3.0, epsilon = 1e-14);
        assert_eq!(t_to_tau(0.0, Hyperbolic).unwrap().tau, 0.0);
        assert_relative_eq!(t_to_tau(2f64.sinh() - 2.0, Hyperbolic).unwrap().tau, 2.0, epsilon = 1e-10);
        assert!(t_to_tau(f64::NAN, Hyperbolic).is_err());
    }

    #[test]
    fn scale_factor_examples() {
        assert_eq!(scale_factor(ct(2.0, Flat)), 4.0);
        assert_eq!(scale_factor(ct(0.0, Hyperbolic)), 0.0);
        assert_relative_eq!(scale_factor(ct(1.0, Hyperbolic)), 1f64.cosh() - 1.0, epsilon = 1e-15);
        assert_relative_eq!(scale_factor(ct(1.0, Hyperbolic)), 0.543_080_634_815_243_7, epsilon = 1e-15);
    }

    #[test]
    fn oddness_is_exact() {
        for tau in [1e-9, 0.5, 0.999, 1.0, 3.7, 19.0] {
            for k in [Flat, Hyperbolic] {
                assert_eq!(tau_to_t(ct(-tau, k)), -tau_to_t(ct(tau, k)));
                let t = tau_to_t(ct(-tau, k));
                assert_eq!(t_to_tau(t, k).unwrap().tau, -t_to_tau(-t, k).unwrap().tau);
                assert!(t_to_tau(t, k).unwrap().tau < 0.0);
            }
        }
    }
}
