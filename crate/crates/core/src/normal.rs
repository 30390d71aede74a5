//! Standard normal distribution: CDF, density and quantile.
//!
//! The quantile starts from Acklam's piecewise rational approximation
//! (relative error ~1.15e-9) and applies one Halley step against the CDF
//! computed from `erfc`, which brings it to within a few ulps.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("inverse normal CDF is defined on (0, 1), got {0}")]
pub struct DomainError(pub f64);

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Phi^-1(u)` for `0 < u < 1`.
pub fn inverse_normal_cdf(u: f64) -> Result<f64, DomainError> {
    if u > 0.0 && u < 1.0 {
        Ok(quantile_unchecked(u))
    } else {
        Err(DomainError(u))
    }
}

/// Caller guarantees `0 < u < 1`.
#[inline]
pub(crate) fn quantile_unchecked(u: f64) -> f64 {
    // 1 - u is exact for u >= 0.5, so the upper half reuses the lower tail
    // and the result is antisymmetric by construction.
    if u > 0.5 {
        -lower_quantile(1.0 - u)
    } else {
        lower_quantile(u)
    }
}

#[inline]
fn lower_quantile(p: f64) -> f64 {
    let x = acklam(p);
    let e = normal_cdf(x) - p;
    let t = e * SQRT_2PI * (0.5 * x * x).exp();
    x - t / (1.0 + 0.5 * x * t)
}

#[inline]
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[cfg(test)]
use crate::oracle;

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from `oracle::normal_quantile_bisect`; see `frozen_values_match_oracle`.
    const Z_0975: f64 = 1.959_963_984_540_054;
    const Z_0158655: f64 = -1.000_001_049_431_045;

    #[test]
    fn frozen_values_match_oracle() {
        assert!((oracle::normal_quantile_bisect(0.975) - Z_0975).abs() < 1e-12);
        assert!((oracle::normal_quantile_bisect(0.158655) - Z_0158655).abs() < 1e-12);
    }

    #[test]
    fn median_is_zero() {
        assert_eq!(inverse_normal_cdf(0.5).unwrap(), 0.0);
    }

    #[test]
    fn known_quantiles() {
        assert!((inverse_normal_cdf(0.975).unwrap() - 1.959964).abs() < 1e-6);
        assert!((inverse_normal_cdf(0.975).unwrap() - Z_0975).abs() < 1e-8);
        assert!((inverse_normal_cdf(0.158655).unwrap() + 1.0).abs() < 1e-5);
        assert!((inverse_normal_cdf(0.158655).unwrap() - Z_0158655).abs() < 1e-8);
    }

    #[test]
    fn domain_errors() {
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(inverse_normal_cdf(u).is_err(), "{u}");
        }
    }

    #[test]
    fn round_trip_against_series_cdf() {
        let lo = 1e-9f64;
        let hi = 1.0 - 1e-9;
        let n = 10_000;
        let mut worst = 0.0f64;
        for i in 0..n {
            let u = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let z = inverse_normal_cdf(u).unwrap();
            worst = worst.max((oracle::normal_cdf(z) - u).abs());
        }
        assert!(worst <= 1e-9, "worst round-trip error {worst:e}");
    }

    #[test]
    fn antisymmetric() {
        for i in 1..2000 {
            let u = i as f64 / 2000.0;
            let a = inverse_normal_cdf(u).unwrap();
            let b = inverse_normal_cdf(1.0 - u).unwrap();
            assert!((a + b).abs() <= 1e-8, "u={u}: {a} vs {b}");
        }
    }

    #[test]
    fn deep_tail_matches_bisection() {
        for u in [1e-15, 1e-12, 2f64.powi(-54), 1e-5, 0.02, 0.3] {
            let z = inverse_normal_cdf(u).unwrap();
            let reference = oracle::normal_quantile_bisect(u);
            assert!((z - reference).abs() <= 1e-8 * reference.abs().max(1.0), "u={u}");
        }
    }
}
