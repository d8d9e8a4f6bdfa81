//! Univariate standard normal distribution.

use crate::error::{Error, Result};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function `Pr(Z <= z)`.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `Pr(Z > z)`, accurate far into the tail.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Inverse of [`normal_cdf`], Wichura's AS 241 (PPND16).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    Ok(quantile_unchecked(p))
}

/// AS 241 without the domain check; `p` must lie in (0, 1).
pub(crate) fn quantile_unchecked(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
                + 67265.770_927_008_7)
                * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r
                + 39307.895_800_092_71)
                * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 0.296_560_571_828_504_87)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Upper quantile `z` with `Pr(Z > z) = p`.
pub fn upper_quantile(p: f64) -> Result<f64> {
    normal_quantile(p).map(|z| -z)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper tail by Taylor series of erf for moderate z and a Lentz continued
    /// fraction for the far tail. Independent of libm.
    fn oracle_sf(z: f64) -> f64 {
        if z < 0.0 {
            return 1.0 - oracle_sf(-z);
        }
        if z < 3.0 {
            let x = z * FRAC_1_SQRT_2;
            let mut term = x;
            let mut sum = x;
            let mut n = 0.0;
            while term.abs() > 1e-18 * sum.abs() {
                n += 1.0;
                term *= -x * x / n;
                sum += term / (2.0 * n + 1.0);
            }
            let erf = 2.0 / PI.sqrt() * sum;
            0.5 * (1.0 - erf)
        } else {
            // Q(z) = phi(z) / (z + 1/(z + 2/(z + 3/(z + ...))))
            let mut frac = z;
            for k in (1..200).rev() {
                frac = z + k as f64 / frac;
            }
            normal_pdf(z) / frac
        }
    }

    #[test]
    fn symmetry_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_matches_series_oracle() {
        let p = 1.0 - 0.00625;
        let z = normal_quantile(p).unwrap();
        // invert the oracle by bisection
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - oracle_sf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((z - lo).abs() < 1e-9, "{z} vs {lo}");
        assert!((z - 2.4977).abs() < 1e-3);
    }

    #[test]
    fn cdf_matches_oracle() {
        for i in -80..=80 {
            let z = i as f64 * 0.1;
            let want = 1.0 - oracle_sf(z);
            let tail = oracle_sf(-z);
            assert!((normal_cdf(z) - want).abs() < 1e-14, "z = {z}");
            if z < -3.0 {
                assert!(((normal_cdf(z) - tail) / tail).abs() < 1e-12, "z = {z}");
            }
        }
    }

    #[test]
    fn round_trip_and_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let z = normal_quantile(p).unwrap();
            assert!((normal_cdf(z) - p).abs() <= 1e-12);
            assert!(z > prev);
            prev = z;
        }
        for &p in &[1e-300, 1e-100, 1e-20, 1e-10] {
            let z = normal_quantile(p).unwrap();
            assert!(((normal_cdf(z) - p) / p).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_domain() {
        assert!(matches!(normal_quantile(0.0), Err(Error::Domain(_))));
        assert!(matches!(normal_quantile(1.0), Err(Error::Domain(_))));
        assert!(normal_quantile(f64::NAN).is_err());
    }
}
