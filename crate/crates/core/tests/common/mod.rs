#![allow(dead_code)]

use ccsgs::normal::{normal_cdf, normal_pdf};

/// `Pr(Z1 < b1, Z2 < b2)` for a standard bivariate normal with correlation
/// `rho`, by composite Simpson on `phi(x) Phi((b2 - rho x) / sqrt(1 - rho^2))`.
pub fn bivariate_cdf(b1: f64, b2: f64, rho: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    let lo = -12.0;
    let hi = b1.min(12.0);
    if hi <= lo {
        return 0.0;
    }
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| normal_pdf(x) * normal_cdf((b2 - rho * x) / s);
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let x = lo + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// Plain bisection for an increasing function.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
