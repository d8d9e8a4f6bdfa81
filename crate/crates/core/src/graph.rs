//! Graphical weighting of hypotheses: initial weights, a transition matrix,
//! weights for intersection hypotheses and updates after rejections.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default cap on the number of hypotheses (`2^12 - 1` intersections).
pub const DEFAULT_MAX_HYPOTHESES: usize = 12;

const MASS_TOL: f64 = 1e-12;
const DENOM_EPS: f64 = 1e-12;

/// Weights and transitions over a set of labelled hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityGraph {
    /// Original labels (0-based) of the hypotheses still in the graph.
    pub hypotheses: Vec<usize>,
    pub weights: Vec<f64>,
    /// Row-major, indexed like `hypotheses`.
    pub transitions: Vec<Vec<f64>>,
}

impl MultiplicityGraph {
    pub fn new(weights: Vec<f64>, transitions: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_limit(weights, transitions, DEFAULT_MAX_HYPOTHESES)
    }

    pub fn with_limit(weights: Vec<f64>, transitions: Vec<Vec<f64>>, max_hypotheses: usize) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::Config("graph needs at least one hypothesis".into()));
        }
        if n > max_hypotheses {
            return Err(Error::Config(format!(
                "{n} hypotheses exceed the limit of {max_hypotheses}"
            )));
        }
        let g = Self {
            hypotheses: (0..n).collect(),
            weights,
            transitions,
        };
        g.validate()?;
        Ok(g)
    }

    /// Equal weights with every transition spread evenly over the others.
    pub fn equal(n: usize) -> Result<Self> {
        let off = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
        let g = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { off }).collect())
            .collect();
        Self::new(vec![1.0 / n as f64; n], g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if self.hypotheses.len() != n {
            return Err(Error::Config("hypothesis labels do not match the weights".into()));
        }
        if self.transitions.len() != n || self.transitions.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("transition matrix must be {n}x{n}")));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("weight {w} is negative or not finite")));
        }
        let total: f64 = self.weights.iter().sum();
        if total > 1.0 + MASS_TOL {
            return Err(Error::Config(format!("weights sum to {total} > 1")));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(Error::Config(format!("transition g[{i}][{i}] must be 0")));
            }
            if let Some(g) = row.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
                return Err(Error::Config(format!("transition {g} in row {i} is negative or not finite")));
            }
            let s: f64 = row.iter().sum();
            if s > 1.0 + MASS_TOL {
                return Err(Error::Config(format!("transition row {i} sums to {s} > 1")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    fn position(&self, label: usize) -> Option<usize> {
        self.hypotheses.iter().position(|&h| h == label)
    }

    /// Removes hypothesis `label`, passing its weight along its outgoing
    /// transitions and rerouting paths through it.
    pub fn remove_rejected(&self, label: usize) -> Result<Self> {
        let l = self
            .position(label)
            .ok_or_else(|| Error::Domain(format!("hypothesis {label} is not in the graph")))?;
        let n = self.len();
        let keep: Vec<usize> = (0..n).filter(|&i| i != l).collect();
        let g = &self.transitions;
        let weights = keep
            .iter()
            .map(|&j| self.weights[j] + self.weights[l] * g[l][j])
            .collect();
        let transitions = keep
            .iter()
            .map(|&i| {
                keep.iter()
                    .map(|&j| {
                        if i == j {
                            return 0.0;
                        }
                        let denom = 1.0 - g[i][l] * g[l][i];
                        if denom <= DENOM_EPS {
                            0.0
                        } else {
                            (g[i][j] + g[i][l] * g[l][j]) / denom
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            hypotheses: keep.iter().map(|&i| self.hypotheses[i]).collect(),
            weights,
            transitions,
        })
    }

    /// Weights `w_i(J)` for the intersection of the hypotheses labelled in
    /// `subset`, in the order given.
    pub fn subset_weights(&self, subset: &[usize]) -> Result<Vec<f64>> {
        if subset.is_empty() {
            return Err(Error::Domain("intersection over an empty set".into()));
        }
        if let Some(h) = subset.iter().find(|&&h| self.position(h).is_none()) {
            return Err(Error::Domain(format!("hypothesis {h} is not in the graph")));
        }
        let mut g = self.clone();
        for &h in &self.hypotheses {
            if !subset.contains(&h) {
                g = g.remove_rejected(h)?;
            }
        }
        Ok(subset
            .iter()
            .map(|&h| g.weights[g.position(h).expect("kept")])
            .collect())
    }
}

/// Labels of the hypotheses in bitmask `mask`, ascending.
pub fn members(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize).filter(|i| mask >> i & 1 == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> MultiplicityGraph {
        MultiplicityGraph::new(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    /// Two primary hypotheses passing weight equally to two secondary ones.
    fn two_endpoints() -> MultiplicityGraph {
        MultiplicityGraph::new(
            vec![0.5, 0.5, 0.0, 0.0],
            vec![
                vec![0.0, 0.0, 0.5, 0.5],
                vec![0.0, 0.0, 0.5, 0.5],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn full_set_unchanged() {
        let g = two_endpoints();
        assert_eq!(g.subset_weights(&[0, 1, 2, 3]).unwrap(), g.weights);
    }

    #[test]
    fn full_transfer() {
        assert_eq!(two().subset_weights(&[0]).unwrap(), vec![1.0]);
        let g = two().remove_rejected(1).unwrap();
        assert_eq!(g.weights, vec![1.0]);
        assert_eq!(g.hypotheses, vec![0]);
    }

    #[test]
    fn primaries_pass_to_secondaries() {
        let g = two_endpoints();
        assert_eq!(g.subset_weights(&[2, 3]).unwrap(), vec![0.5, 0.5]);
        let g = g.remove_rejected(0).unwrap().remove_rejected(1).unwrap();
        assert_eq!(g.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn last_removal_gives_empty_graph() {
        let g = MultiplicityGraph::new(vec![1.0], vec![vec![0.0]]).unwrap();
        assert!(g.remove_rejected(0).unwrap().is_empty());
    }

    #[test]
    fn validation() {
        assert!(MultiplicityGraph::new(vec![0.6, 0.6], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(MultiplicityGraph::new(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![1.0, 0.0]]).is_err());
        assert!(MultiplicityGraph::new(vec![0.5, 0.5], vec![vec![0.0, 1.2], vec![1.0, 0.0]]).is_err());
        assert!(MultiplicityGraph::new(vec![0.1; 13], vec![vec![0.0; 13]; 13]).is_err());
        assert!(two().subset_weights(&[]).is_err());
    }

    #[test]
    fn mask_members() {
        assert_eq!(members(0b1011), vec![0, 1, 3]);
    }
}
