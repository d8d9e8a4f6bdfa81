//! One-hypothesis group-sequential bounds, crossing probabilities and
//! nominal levels.

use crate::correlation::validate_timings;
use crate::crossing::{default_backend, ProbabilityBackend, SequentialRect};
use crate::error::{Error, Result};
use crate::normal::normal_sf;
use crate::roots::{solve_monotone, RootTol};
use crate::spending::Spending;
use serde::{Deserialize, Serialize};

/// Initial bracket for a bound; widened downwards if a spending increment is
/// too large for it.
const BRACKET: (f64, f64) = (0.0, 10.0);
const BRACKET_FLOOR: f64 = -10.0;

const BOUND_TOL: RootTol = RootTol {
    value: 1e-11,
    x: 1e-10,
    max_iter: 200,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsBounds {
    pub timings: Vec<f64>,
    pub bounds: Vec<f64>,
    /// `1 - Phi(b_k)`.
    pub nominal: Vec<f64>,
}

impl GsBounds {
    pub fn new(timings: Vec<f64>, bounds: Vec<f64>) -> Result<Self> {
        validate_timings(&timings)?;
        if bounds.len() != timings.len() {
            return Err(Error::Domain(format!(
                "{} bounds for {} analyses",
                bounds.len(),
                timings.len()
            )));
        }
        if let Some(b) = bounds.iter().find(|b| !b.is_finite()) {
            return Err(Error::Domain(format!("bound {b} is not finite")));
        }
        let nominal = bounds.iter().map(|&b| normal_sf(b)).collect();
        Ok(Self {
            timings,
            bounds,
            nominal,
        })
    }

    pub fn analyses(&self) -> usize {
        self.bounds.len()
    }
}

/// Expected values of the Z statistic at each analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub values: Vec<f64>,
}

impl Drift {
    pub fn zero(analyses: usize) -> Self {
        Self {
            values: vec![0.0; analyses],
        }
    }

    /// `delta_k = delta_K * sqrt(t_k)`.
    pub fn from_final(timings: &[f64], delta_final: f64) -> Self {
        Self {
            values: timings.iter().map(|t| delta_final * t.sqrt()).collect(),
        }
    }

    /// `delta_k = sqrt(n_k) * theta`.
    pub fn from_effect(information: &[f64], theta: f64) -> Result<Self> {
        if let Some(n) = information.iter().find(|&&n| !(n > 0.0)) {
            return Err(Error::Domain(format!("information must be positive, got {n}")));
        }
        Ok(Self {
            values: information.iter().map(|n| n.sqrt() * theta).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingProbabilities {
    pub incremental: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl CrossingProbabilities {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Bounds whose null crossing probabilities follow `spending` at `timings`.
pub fn bounds_from_spending(timings: &[f64], spending: &Spending) -> Result<GsBounds> {
    bounds_from_spending_with(default_backend().as_ref(), timings, spending)
}

pub fn bounds_from_spending_with(
    backend: &dyn ProbabilityBackend,
    timings: &[f64],
    spending: &Spending,
) -> Result<GsBounds> {
    validate_timings(timings)?;
    let targets: Vec<f64> = timings.iter().map(|&t| spending.spend(t)).collect();
    let bounds = solve_bounds(backend, timings, &[], &targets, false)?;
    GsBounds::new(timings.to_vec(), bounds)
}

/// Sequentially solves bounds `fixed.len()..K` so that the cumulative null
/// crossing probability through analysis `j` equals `targets[j - fixed.len()]`.
///
/// A non-positive increment yields a `+inf` bound when `allow_skip` is set
/// and an error otherwise.
pub(crate) fn solve_bounds(
    backend: &dyn ProbabilityBackend,
    information: &[f64],
    fixed: &[f64],
    targets: &[f64],
    allow_skip: bool,
) -> Result<Vec<f64>> {
    let k_max = information.len();
    if fixed.len() + targets.len() != k_max {
        return Err(Error::Domain(format!(
            "{} fixed bounds and {} targets for {k_max} analyses",
            fixed.len(),
            targets.len()
        )));
    }
    let mut bounds = fixed.to_vec();
    let mut prev = if bounds.is_empty() {
        0.0
    } else {
        backend.crossing(&SequentialRect::single(&information[..bounds.len()], &bounds))?
    };
    for (j, &target) in (fixed.len()..k_max).zip(targets) {
        let info = &information[..=j];
        let mut trial = bounds.clone();
        trial.push(0.0);
        let mut cross = |b: f64| -> Result<f64> {
            trial[j] = b;
            backend.crossing(&SequentialRect::single(info, &trial))
        };

        let (mut lo, hi) = BRACKET;
        let f_hi = cross(hi)?;
        let bound = if target - prev <= 0.0 || target <= f_hi {
            if !allow_skip {
                return Err(Error::Numerical(format!(
                    "spending increment {:.3e} at analysis {} leaves no room for a bound",
                    target - prev,
                    j + 1
                )));
            }
            f64::INFINITY
        } else {
            let mut f_lo = cross(lo)?;
            while f_lo < target && lo > BRACKET_FLOOR {
                lo -= 2.0;
                f_lo = cross(lo)?;
            }
            solve_monotone(&mut cross, lo, hi, f_lo, f_hi, target, BOUND_TOL)?
        };
        bounds.push(bound);
        prev = if bound.is_finite() { target } else { prev };
    }
    Ok(bounds)
}

/// Per-analysis and cumulative probabilities of crossing the bounds.
pub fn crossing_prob(bounds: &GsBounds, drift: &Drift) -> Result<CrossingProbabilities> {
    crossing_prob_with(default_backend().as_ref(), &bounds.timings, &bounds.bounds, drift)
}

/// Same as [`crossing_prob`] for arbitrary information and possibly infinite
/// bounds.
pub fn crossing_prob_with(
    backend: &dyn ProbabilityBackend,
    information: &[f64],
    bounds: &[f64],
    drift: &Drift,
) -> Result<CrossingProbabilities> {
    if drift.values.len() != bounds.len() || information.len() != bounds.len() {
        return Err(Error::Domain("drift, bounds and information differ in length".into()));
    }
    let mut cumulative = Vec::with_capacity(bounds.len());
    for j in 0..bounds.len() {
        let rect = SequentialRect::single(&information[..=j], &bounds[..=j])
            .with_means(vec![drift.values[..=j].to_vec()]);
        cumulative.push(backend.crossing(&rect)?);
    }
    let mut prev = 0.0;
    let incremental = cumulative
        .iter()
        .map(|&c| {
            let d = (c - prev).max(0.0);
            prev = c;
            d
        })
        .collect();
    Ok(CrossingProbabilities {
        incremental,
        cumulative,
    })
}

/// Sum of per-analysis nominal one-sided levels.
pub fn nominal_sum(bounds: &GsBounds) -> f64 {
    bounds.nominal.iter().sum()
}
