//! Separation-of-variables transform of a normal rectangle probability to the
//! unit cube, with tightest-bound-first variable ordering.

use super::matrix::CorrelationMatrix;
use crate::normal::{normal_cdf, normal_pdf, quantile_unchecked};

const PIVOT_EPS: f64 = 1e-10;

/// Cholesky factor (row-major, lower triangle) of the reordered problem.
#[derive(Clone, Debug)]
pub(crate) struct GenzProblem {
    pub dim: usize,
    chol: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// `Phi` of the first variable's limits, constant over the cube.
    first: (f64, f64),
}

impl GenzProblem {
    /// Pivoted Cholesky. At step `i` the remaining variable with the smallest
    /// conditional probability is moved forward and its conditional
    /// expectation is used when ranking the rest.
    pub fn new(corr: &CorrelationMatrix, lower: &[f64], upper: &[f64]) -> Self {
        let n = corr.dim();
        let mut cov: Vec<f64> = corr.as_slice().to_vec();
        let mut a = lower.to_vec();
        let mut b = upper.to_vec();
        let mut l = vec![0.0; n * n];
        let mut y = vec![0.0; n];

        for i in 0..n {
            let mut best = i;
            let mut best_p = f64::INFINITY;
            for j in i..n {
                let mut s = cov[j * n + j];
                let mut shift = 0.0;
                for m in 0..i {
                    s -= l[j * n + m] * l[j * n + m];
                    shift += l[j * n + m] * y[m];
                }
                let sd = s.max(0.0).sqrt();
                let p = if sd > PIVOT_EPS {
                    normal_cdf((b[j] - shift) / sd) - normal_cdf((a[j] - shift) / sd)
                } else {
                    // deterministic given earlier variables; rank last
                    f64::INFINITY
                };
                if p < best_p {
                    best_p = p;
                    best = j;
                }
            }
            if best != i {
                swap_sym(&mut cov, n, i, best);
                for m in 0..n {
                    l.swap(i * n + m, best * n + m);
                }
                a.swap(i, best);
                b.swap(i, best);
            }

            let mut s = cov[i * n + i];
            for m in 0..i {
                s -= l[i * n + m] * l[i * n + m];
            }
            if s > PIVOT_EPS * PIVOT_EPS {
                let d = s.sqrt();
                l[i * n + i] = d;
                for r in (i + 1)..n {
                    let mut v = cov[r * n + i];
                    for m in 0..i {
                        v -= l[r * n + m] * l[i * n + m];
                    }
                    l[r * n + i] = v / d;
                }
                let shift: f64 = (0..i).map(|m| l[i * n + m] * y[m]).sum();
                let lo = (a[i] - shift) / d;
                let hi = (b[i] - shift) / d;
                let mass = normal_cdf(hi) - normal_cdf(lo);
                y[i] = if mass > 1e-300 {
                    (pdf_or_zero(lo) - pdf_or_zero(hi)) / mass
                } else if hi.is_finite() && lo.is_finite() {
                    0.5 * (lo + hi)
                } else if hi.is_finite() {
                    hi
                } else {
                    lo
                };
            } else {
                l[i * n + i] = 0.0;
                for r in (i + 1)..n {
                    l[r * n + i] = 0.0;
                }
                y[i] = 0.0;
            }
        }

        let first = if l[0] > 0.0 {
            (normal_cdf(a[0] / l[0]), normal_cdf(b[0] / l[0]))
        } else {
            (0.0, 1.0)
        };
        Self {
            dim: n,
            chol: l,
            lower: a,
            upper: b,
            first,
        }
    }

    /// Number of uniform coordinates the integrand consumes.
    pub fn cube_dim(&self) -> usize {
        self.dim.saturating_sub(1)
    }

    /// Integrand value at a point `w` of the `(dim - 1)`-cube.
    /// `y` is scratch space of length `dim`.
    #[inline]
    pub fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let n = self.dim;
        let (mut d, mut e) = self.first;
        let mut f = e - d;
        for i in 1..n {
            if f <= 0.0 {
                return 0.0;
            }
            let u = (d + w[i - 1] * (e - d)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            y[i - 1] = quantile_unchecked(u);
            let row = &self.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(c, v)| c * v).sum();
            let diag = self.chol[i * n + i];
            if diag > 0.0 {
                d = normal_cdf((self.lower[i] - s) / diag);
                e = normal_cdf((self.upper[i] - s) / diag);
                f *= e - d;
            } else {
                if s < self.lower[i] || s > self.upper[i] {
                    return 0.0;
                }
                d = 0.0;
                e = 1.0;
            }
        }
        f
    }
}

#[inline]
fn pdf_or_zero(z: f64) -> f64 {
    if z.is_finite() {
        normal_pdf(z)
    } else {
        0.0
    }
}

fn swap_sym(m: &mut [f64], n: usize, i: usize, j: usize) {
    for k in 0..n {
        m.swap(i * n + k, j * n + k);
    }
    for k in 0..n {
        m.swap(k * n + i, k * n + j);
    }
}
