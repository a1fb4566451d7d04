//! Standard normal distribution function and its inverse.
//!
//! `normal_cdf` is evaluated through the complementary error function so that
//! both tails keep full relative precision. `normal_quantile` starts from
//! Wichura's AS241 rational approximation and applies one Newton step on the
//! distribution function.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{invalid, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Φ(z). Saturates to 0 or 1 in the far tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Φ⁻¹(u) for u in the open unit interval.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(invalid(format!("quantile argument {u} outside (0, 1)")));
    }
    Ok(quantile_open(u))
}

/// Φ⁻¹ extended to the closed interval with Φ⁻¹(0) = -∞ and Φ⁻¹(1) = +∞.
pub(crate) fn quantile_closed(u: f64) -> f64 {
    if u <= 0.0 {
        f64::NEG_INFINITY
    } else if u >= 1.0 {
        f64::INFINITY
    } else {
        quantile_open(u)
    }
}

fn quantile_open(u: f64) -> f64 {
    // Work in the lower tail so the Newton residual keeps relative precision.
    if u > 0.5 {
        return -quantile_open(1.0 - u);
    }
    let x = as241(u);
    let pdf = normal_pdf(x);
    if pdf > 0.0 {
        x - (normal_cdf(x) - u) / pdf
    } else {
        x
    }
}

// AS241 coefficients, constant term first.
#[allow(clippy::excessive_precision)]
const CENTRAL_NUM: [f64; 8] = [
    3.387_132_872_796_366_608_0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
#[allow(clippy::excessive_precision)]
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083_0e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061_0e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561_0e3,
];
#[allow(clippy::excessive_precision)]
const INTERMEDIATE_NUM: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_90,
    5.769_497_221_460_691_405_50,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_70e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_40e-4,
];
#[allow(clippy::excessive_precision)]
const INTERMEDIATE_DEN: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_40,
    6.897_673_349_851_000_045_50e-1,
    1.481_039_764_274_800_745_90e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946_00e-4,
    1.050_750_071_644_416_843_24e-9,
];
#[allow(clippy::excessive_precision)]
const TAIL_NUM: [f64; 8] = [
    6.657_904_643_501_103_777_20,
    5.463_784_911_164_114_369_90,
    1.784_826_539_917_291_335_80,
    2.965_605_718_285_048_912_30e-1,
    2.653_218_952_657_612_309_30e-2,
    1.242_660_947_388_078_438_60e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
#[allow(clippy::excessive_precision)]
const TAIL_DEN: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_90e-1,
    1.369_298_809_227_358_053_10e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591_00e-4,
    1.846_318_317_510_054_681_80e-5,
    1.421_511_758_316_445_888_70e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn horner(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(&CENTRAL_NUM, r) / horner(&CENTRAL_DEN, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        horner(&INTERMEDIATE_NUM, r) / horner(&INTERMEDIATE_DEN, r)
    } else {
        let r = r - 5.0;
        horner(&TAIL_NUM, r) / horner(&TAIL_DEN, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ(z) from the Taylor series of erf, summed with plenty of terms.
    /// Only accurate for moderate |z|, which is all it is used for.
    fn cdf_series(z: f64) -> f64 {
        let x = z * FRAC_1_SQRT_2;
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        0.5 + sum / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        for z in [-3.0, -1.7, -0.3, 0.4, 1.0, 2.2, 3.5] {
            assert!((normal_cdf(z) - cdf_series(z)).abs() < 1e-13, "z={z}");
        }
    }

    #[test]
    fn cdf_symmetry_and_tails() {
        for i in -60..=60 {
            let z = i as f64 / 10.0;
            assert!((normal_cdf(-z) - (1.0 - normal_cdf(z))).abs() < 1e-15);
        }
        assert!(normal_cdf(-40.0) >= 0.0);
        assert_eq!(normal_cdf(40.0), 1.0);
        // Relative accuracy in the lower tail: Φ(-8) = 6.220960574271785e-16.
        assert!((normal_cdf(-8.0) / 6.220_960_574_271_785e-16 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_reference_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        // Bisection on the distribution function as an independent oracle.
        let (mut lo, mut hi) = (0.0_f64, 5.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < 0.996 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = normal_quantile(0.996).unwrap();
        assert!((q - lo).abs() < 1e-12);
        assert!((q - 2.6521).abs() < 1e-4);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(u).is_err());
        }
    }

    #[test]
    fn round_trips() {
        for i in -600..=600 {
            let z = i as f64 / 100.0;
            let back = normal_quantile(normal_cdf(z)).unwrap();
            // Above z ≈ 5.5 the cdf itself is within a few ulps of one.
            let tol = if z > 5.0 { 1e-6 } else { 1e-9 };
            assert!((back - z).abs() < tol, "z={z} back={back}");
        }
        let mut u = 1e-8;
        while u < 1.0 - 1e-8 {
            let res = (normal_cdf(normal_quantile(u).unwrap()) - u).abs();
            assert!(res < 1e-12, "u={u} res={res}");
            assert!(res / u.min(1.0 - u) < 1e-10);
            u *= 1.37;
            if u > 0.5 {
                u = 1.0 - (1.0 - u) / 1.37 / 1.37;
                if 1.0 - u < 1e-8 {
                    break;
                }
            }
        }
    }
}
