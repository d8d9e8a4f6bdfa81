//! Multivariate normal rectangle probabilities.
//!
//! Probabilities are computed by transforming the rectangle to the unit cube
//! (separation of variables with bound-tightness ordering) and integrating with
//! a randomly shifted Kronecker lattice. Several independent shifts give an
//! unbiased estimate together with an error bound; the point count doubles
//! until the bound meets the requested tolerance.

mod genz;
mod lattice;
mod matrix;

pub use lattice::MAX_DIM;
pub use matrix::{CorrelationMatrix, PSD_REPAIR_TOL};

use crate::error::{Error, Result};
use crate::normal::normal_cdf;
use genz::GenzProblem;
use lattice::ShiftedKronecker;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default absolute tolerance of a single evaluation.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Correlations this close to +-1 are collapsed to a single variable.
const COLLAPSE_EPS: f64 = 1e-12;

/// Student-t 99% two-sided quantile with `DEFAULT_SHIFTS - 1` degrees of freedom.
const ERROR_MULTIPLIER: f64 = 3.106;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    /// Estimated absolute error at roughly 99% confidence.
    pub error_bound: f64,
    /// Integrand evaluations spent.
    pub evaluations: u64,
}

impl ProbabilityEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            error_bound: 0.0,
            evaluations: 0,
        }
    }
}

/// Tuning for one rectangle evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvnOptions {
    pub tol: f64,
    pub seed: u64,
    /// Independent random shifts used for the error estimate.
    pub shifts: usize,
    /// Lattice points per shift in the first pass.
    pub initial_points: u64,
    /// Cap on lattice points per shift.
    pub max_points: u64,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            seed: 0x5eed,
            shifts: 12,
            initial_points: 256,
            max_points: 1 << 20,
        }
    }
}

impl MvnOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `Pr(Z_m < bounds_m for all m)` for `Z ~ N(0, corr)`. Bounds may be `+inf`.
pub fn upper_rect_prob(
    bounds: &[f64],
    corr: &CorrelationMatrix,
    tol: f64,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    let lower = vec![f64::NEG_INFINITY; bounds.len()];
    rect_prob(&lower, bounds, corr, &MvnOptions::with_tol(tol).seed(seed))
}

/// `Pr(Z_m < bounds_m - mean_m for all m)`, i.e. the same rectangle for a
/// shifted mean.
pub fn upper_rect_prob_shifted(
    bounds: &[f64],
    mean: &[f64],
    corr: &CorrelationMatrix,
    opts: &MvnOptions,
) -> Result<ProbabilityEstimate> {
    if mean.len() != bounds.len() {
        return Err(Error::Domain("mean and bounds differ in length".into()));
    }
    let shifted: Vec<f64> = bounds.iter().zip(mean).map(|(b, m)| b - m).collect();
    let lower = vec![f64::NEG_INFINITY; bounds.len()];
    rect_prob(&lower, &shifted, corr, opts)
}

/// `Pr(lower_m < Z_m < upper_m for all m)` for `Z ~ N(0, corr)`.
pub fn rect_prob(
    lower: &[f64],
    upper: &[f64],
    corr: &CorrelationMatrix,
    opts: &MvnOptions,
) -> Result<ProbabilityEstimate> {
    let n = corr.dim();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Domain(format!(
            "limits of length {}/{} for a {n}-dimensional distribution",
            lower.len(),
            upper.len()
        )));
    }
    if n > MAX_DIM {
        return Err(Error::Domain(format!("dimension {n} exceeds {MAX_DIM}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if lower.iter().chain(upper).any(|x| x.is_nan()) {
        return Err(Error::Domain("NaN integration limit".into()));
    }

    let Some(reduced) = reduce(lower, upper, corr) else {
        return Ok(ProbabilityEstimate::exact(0.0));
    };
    match reduced.index.len() {
        0 => Ok(ProbabilityEstimate::exact(1.0)),
        1 => Ok(ProbabilityEstimate::exact(
            normal_cdf(reduced.upper[0]) - normal_cdf(reduced.lower[0]),
        )),
        _ => {
            let sub = corr.submatrix(&reduced.index);
            let problem = GenzProblem::new(&sub, &reduced.lower, &reduced.upper);
            Ok(integrate(&problem, opts))
        }
    }
}

struct Reduced {
    index: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Drops unconstrained coordinates and merges perfectly (anti)correlated ones.
/// Returns `None` if the rectangle is empty.
fn reduce(lower: &[f64], upper: &[f64], corr: &CorrelationMatrix) -> Option<Reduced> {
    let mut out = Reduced {
        index: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
    };
    'outer: for m in 0..lower.len() {
        let (a, b) = (lower[m], upper[m]);
        if a >= b {
            return None;
        }
        if a == f64::NEG_INFINITY && b == f64::INFINITY {
            continue;
        }
        for (slot, &kept) in out.index.iter().enumerate() {
            let rho = corr.get(kept, m);
            if rho >= 1.0 - COLLAPSE_EPS {
                out.lower[slot] = out.lower[slot].max(a);
                out.upper[slot] = out.upper[slot].min(b);
                if out.lower[slot] >= out.upper[slot] {
                    return None;
                }
                continue 'outer;
            }
            if rho <= -1.0 + COLLAPSE_EPS {
                out.lower[slot] = out.lower[slot].max(-b);
                out.upper[slot] = out.upper[slot].min(-a);
                if out.lower[slot] >= out.upper[slot] {
                    return None;
                }
                continue 'outer;
            }
        }
        out.index.push(m);
        out.lower.push(a);
        out.upper.push(b);
    }
    Some(out)
}

fn integrate(problem: &GenzProblem, opts: &MvnOptions) -> ProbabilityEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shifts = opts.shifts.max(2);
    let lattices: Vec<ShiftedKronecker> = (0..shifts)
        .map(|_| ShiftedKronecker::new(problem.cube_dim(), &mut rng))
        .collect();
    let mut sums = vec![0.0; shifts];
    let mut w = vec![0.0; problem.cube_dim()];
    let mut anti = vec![0.0; problem.cube_dim()];
    let mut y = vec![0.0; problem.dim];

    let mut done: u64 = 0;
    let mut target = opts.initial_points.max(1);
    let mut evaluations = 0u64;
    loop {
        for (lat, sum) in lattices.iter().zip(sums.iter_mut()) {
            for j in done..target {
                lat.point(j + 1, &mut w);
                anti.iter_mut().zip(&w).for_each(|(a, x)| *a = 1.0 - x);
                *sum += 0.5 * (problem.integrand(&w, &mut y) + problem.integrand(&anti, &mut y));
            }
        }
        evaluations += 2 * (target - done) * shifts as u64;
        done = target;

        let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
        let mean = means.iter().sum::<f64>() / shifts as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
            / ((shifts - 1) * shifts) as f64;
        let error = ERROR_MULTIPLIER * var.sqrt();
        if error <= opts.tol || done >= opts.max_points {
            return ProbabilityEstimate {
                value: mean.clamp(0.0, 1.0),
                error_bound: error,
                evaluations,
            };
        }
        target = (done * 2).min(opts.max_points);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independence_factorization() {
        let corr = CorrelationMatrix::identity(2);
        let est = upper_rect_prob(&[1.6449, 1.6449], &corr, 1e-7, 1).unwrap();
        let want = normal_cdf(1.6449).powi(2);
        assert!((est.value - want).abs() < 5e-6);
        assert!((est.value - 0.9025).abs() < 5e-5);
    }

    #[test]
    fn perfect_correlation_collapses() {
        let corr = CorrelationMatrix::bivariate(1.0).unwrap();
        let est = upper_rect_prob(&[0.7, 1.3], &corr, 1e-6, 1).unwrap();
        assert_eq!(est.value, normal_cdf(0.7));
        let anti = CorrelationMatrix::bivariate(-1.0).unwrap();
        let est = upper_rect_prob(&[0.7, 1.3], &anti, 1e-6, 1).unwrap();
        assert!((est.value - (normal_cdf(0.7) - normal_cdf(-1.3))).abs() < 1e-15);
    }

    #[test]
    fn infinite_bounds_are_dropped() {
        let corr = CorrelationMatrix::from_fn(3, |_, _| 0.3).unwrap();
        let est = upper_rect_prob(&[f64::INFINITY, 0.2, f64::INFINITY], &corr, 1e-6, 1).unwrap();
        assert_eq!(est.value, normal_cdf(0.2));
        let all = upper_rect_prob(&[f64::INFINITY; 3], &corr, 1e-6, 1).unwrap();
        assert_eq!(all.value, 1.0);
    }

    #[test]
    fn empty_rectangle_is_zero() {
        let corr = CorrelationMatrix::identity(2);
        let est = upper_rect_prob(&[f64::NEG_INFINITY, 1.0], &corr, 1e-6, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let corr = CorrelationMatrix::from_fn(4, |i, j| 0.8f64.powi((i - j) as i32)).unwrap();
        let b = [1.0, 0.5, 1.5, 0.2];
        let x = upper_rect_prob(&b, &corr, 1e-6, 42).unwrap();
        let y = upper_rect_prob(&b, &corr, 1e-6, 42).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rejects_bad_arguments() {
        let corr = CorrelationMatrix::identity(2);
        assert!(upper_rect_prob(&[1.0], &corr, 1e-6, 1).is_err());
        assert!(upper_rect_prob(&[1.0, 1.0], &corr, 0.0, 1).is_err());
        assert!(upper_rect_prob(&[1.0, f64::NAN], &corr, 1e-6, 1).is_err());
    }
}
