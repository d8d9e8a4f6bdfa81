//! Bracketed root finding for monotone functions.

use crate::error::{Error, Result};

/// Tolerances for [`solve_monotone`].
#[derive(Clone, Copy, Debug)]
pub struct RootTol {
    /// Stop once `|f(x) - target| <= value`.
    pub value: f64,
    /// Stop once the bracket is narrower than this.
    pub x: f64,
    pub max_iter: usize,
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for monotone `f`, using
/// regula falsi with the Illinois modification. `f_lo`/`f_hi` are the values
/// at the bracket ends, which must straddle `target`.
pub fn solve_monotone<F>(mut f: F, lo: f64, hi: f64, f_lo: f64, f_hi: f64, target: f64, tol: RootTol) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let (mut ga, mut gb) = (f_lo - target, f_hi - target);
    if ga.abs() <= tol.value {
        return Ok(a);
    }
    if gb.abs() <= tol.value {
        return Ok(b);
    }
    if ga.signum() == gb.signum() {
        return Err(Error::Numerical(format!(
            "root not bracketed on [{lo}, {hi}]: f = {f_lo}, {f_hi}, target {target}"
        )));
    }
    let mut side = 0i8;
    for _ in 0..tol.max_iter {
        let mut x = (a * gb - b * ga) / (gb - ga);
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let gx = f(x)? - target;
        if gx.abs() <= tol.value || (b - a).abs() <= tol.x {
            return Ok(x);
        }
        if gx.signum() == gb.signum() {
            b = x;
            gb = gx;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            ga = gx;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::Numerical(format!(
        "root finding did not converge on [{a}, {b}] within {} iterations",
        tol.max_iter
    )))
}
