//! Probabilities that no statistic crosses its bound, for statistics laid out
//! over nested populations and sequential analyses.
//!
//! Every probability the design calculations need has the form
//! `Pr(Z_pk < b_pk for all p, k)` where `Z` has the complete correlation
//! structure implied by cumulative information. Backends evaluating it are
//! selected by name from a [`BackendRegistry`].

mod qmc;
mod quadrature;
mod recursive;

pub use qmc::QmcBackend;
pub use recursive::RecursiveBackend;

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// `Pr(Z_pk < bounds[p][k] for all p, k)` where rows are nested populations
/// (smallest first) and columns analyses. Bounds may be `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequentialRect {
    pub information: Vec<Vec<f64>>,
    pub bounds: Vec<Vec<f64>>,
    /// `E(Z_pk)`.
    pub means: Vec<Vec<f64>>,
}

impl SequentialRect {
    pub fn new(information: Vec<Vec<f64>>, bounds: Vec<Vec<f64>>) -> Self {
        let means = bounds.iter().map(|r| vec![0.0; r.len()]).collect();
        Self {
            information,
            bounds,
            means,
        }
    }

    pub fn with_means(mut self, means: Vec<Vec<f64>>) -> Self {
        self.means = means;
        self
    }

    /// One population observed at `information` with the given bounds.
    pub fn single(information: &[f64], bounds: &[f64]) -> Self {
        Self::new(vec![information.to_vec()], vec![bounds.to_vec()])
    }

    pub fn populations(&self) -> usize {
        self.information.len()
    }

    pub fn analyses(&self) -> usize {
        self.information.first().map_or(0, Vec::len)
    }

    /// Removes analyses at which every bound is infinite; such looks do not
    /// constrain anything. Populations with no finite bound are dropped too.
    pub(crate) fn compressed(&self) -> Result<SequentialRect> {
        let (pops, analyses) = (self.populations(), self.analyses());
        if pops == 0 || analyses == 0 {
            return Err(Error::Domain("empty probability problem".into()));
        }
        for rows in [&self.bounds, &self.means] {
            if rows.len() != pops || rows.iter().any(|r| r.len() != analyses) {
                return Err(Error::Domain("bounds/means do not match the information table".into()));
            }
        }
        if self.information.iter().any(|r| r.len() != analyses) {
            return Err(Error::Domain("ragged information table".into()));
        }
        if self.bounds.iter().flatten().any(|b| b.is_nan())
            || self.means.iter().flatten().any(|m| !m.is_finite())
        {
            return Err(Error::Domain("NaN bound or non-finite mean".into()));
        }
        let keep_k: Vec<usize> = (0..analyses)
            .filter(|&k| (0..pops).any(|p| self.bounds[p][k] < f64::INFINITY))
            .collect();
        let keep_p: Vec<usize> = (0..pops)
            .filter(|&p| keep_k.iter().any(|&k| self.bounds[p][k] < f64::INFINITY))
            .collect();
        let pick = |t: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            keep_p
                .iter()
                .map(|&p| keep_k.iter().map(|&k| t[p][k]).collect())
                .collect()
        };
        let out = SequentialRect {
            information: pick(&self.information),
            bounds: pick(&self.bounds),
            means: pick(&self.means),
        };
        if !out.information.is_empty() {
            crate::correlation::validate_information(&out.information)?;
        }
        Ok(out)
    }

    /// Sets every bound of analyses `from..` to `+inf`.
    pub fn truncated(&self, through: usize) -> SequentialRect {
        let mut out = self.clone();
        for row in &mut out.bounds {
            for b in row.iter_mut().skip(through) {
                *b = f64::INFINITY;
            }
        }
        out
    }
}

/// Strategy evaluating [`SequentialRect`] probabilities.
pub trait ProbabilityBackend: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Whether this backend can evaluate `problem` (already compressed).
    fn supports(&self, problem: &SequentialRect) -> bool;

    /// Probability for a compressed, validated problem.
    fn evaluate(&self, problem: &SequentialRect) -> Result<f64>;

    /// `Pr(no crossing)`.
    fn non_crossing(&self, problem: &SequentialRect) -> Result<f64> {
        let reduced = problem.compressed()?;
        if reduced.information.is_empty() {
            return Ok(1.0);
        }
        if !self.supports(&reduced) {
            return Err(Error::Domain(format!(
                "backend '{}' cannot evaluate a problem with {} populations",
                self.name(),
                reduced.populations()
            )));
        }
        self.evaluate(&reduced).map(|p| p.clamp(0.0, 1.0))
    }

    /// `Pr(some statistic crosses)`.
    fn crossing(&self, problem: &SequentialRect) -> Result<f64> {
        self.non_crossing(problem).map(|p| 1.0 - p)
    }
}

/// Recursive integration where it applies, lattice integration otherwise.
#[derive(Debug, Default, Clone)]
pub struct AutoBackend {
    pub recursive: RecursiveBackend,
    pub qmc: QmcBackend,
}

impl ProbabilityBackend for AutoBackend {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn supports(&self, _problem: &SequentialRect) -> bool {
        true
    }

    fn evaluate(&self, problem: &SequentialRect) -> Result<f64> {
        if self.recursive.supports(problem) {
            self.recursive.evaluate(problem)
        } else {
            self.qmc.evaluate(problem)
        }
    }
}

type BackendFactory = fn() -> Arc<dyn ProbabilityBackend>;

/// Name -> backend constructor.
#[derive(Clone)]
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("auto", || Arc::new(AutoBackend::default()));
        r.register("recursive", || Arc::new(RecursiveBackend::default()));
        r.register("qmc", || Arc::new(QmcBackend::default()));
        r
    }
}

impl BackendRegistry {
    pub fn register(&mut self, name: &str, factory: BackendFactory) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn create(&self, name: &str) -> Result<Arc<dyn ProbabilityBackend>> {
        self.factories
            .get(&name.to_ascii_lowercase())
            .map(|f| f())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown probability backend '{name}' (known: {})",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

/// Backend used when none is named.
pub fn default_backend() -> Arc<dyn ProbabilityBackend> {
    Arc::new(AutoBackend::default())
}
