use super::{ProbabilityBackend, SequentialRect};
use crate::correlation::{ccs_entry, StatIndex};
use crate::error::Result;
use crate::mvn::{self, CorrelationMatrix, MvnOptions};

/// Builds the complete correlation structure of the constrained statistics and
/// integrates the rectangle with the lattice engine.
#[derive(Clone, Debug)]
pub struct QmcBackend {
    pub options: MvnOptions,
}

impl Default for QmcBackend {
    fn default() -> Self {
        Self {
            options: MvnOptions::with_tol(1e-6),
        }
    }
}

impl QmcBackend {
    pub fn with_tol(tol: f64, seed: u64) -> Self {
        Self {
            options: MvnOptions::with_tol(tol).seed(seed),
        }
    }
}

impl ProbabilityBackend for QmcBackend {
    fn name(&self) -> &'static str {
        "qmc"
    }

    fn supports(&self, problem: &SequentialRect) -> bool {
        let cells = problem.bounds.iter().flatten().filter(|b| **b < f64::INFINITY).count();
        cells <= mvn::MAX_DIM
    }

    fn evaluate(&self, problem: &SequentialRect) -> Result<f64> {
        let mut cells = Vec::new();
        let mut upper = Vec::new();
        for k in 0..problem.analyses() {
            for p in 0..problem.populations() {
                let b = problem.bounds[p][k];
                if b < f64::INFINITY {
                    cells.push(StatIndex::new(p, k));
                    upper.push(b - problem.means[p][k]);
                }
            }
        }
        let corr = CorrelationMatrix::from_fn(cells.len(), |r, c| {
            ccs_entry(&problem.information, cells[r], cells[c])
        })?;
        let lower = vec![f64::NEG_INFINITY; upper.len()];
        Ok(mvn::rect_prob(&lower, &upper, &corr, &self.options)?.value)
    }
}
