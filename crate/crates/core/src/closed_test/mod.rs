//! Intersection-hypothesis bounds under the complete correlation structure
//! and the closed test built on them.
//!
//! Every nonempty subset `J` of the populations gets its own bounds
//! `c_ij(J)`, derived by one of the registered [`BoundAlgorithm`]s so that the
//! null probability of crossing any of them is `alpha * sum_{i in J} w_i(J)`.
//! Elementary hypotheses are rejected only when every intersection containing
//! them is.

mod algorithms;
mod serde_bounds;

pub use algorithms::{BoundAlgorithm, CurrentAndFuture, CurrentOnly, LargestPopulation};

use crate::correlation::{validate_information, InformationTable};
use crate::crossing::{default_backend, ProbabilityBackend, SequentialRect};
use crate::error::{Error, Result};
use crate::graph::{members, MultiplicityGraph};
use crate::spending::SpendingFunction;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Inputs shared by every intersection hypothesis.
#[derive(Clone, Debug)]
pub struct ClosedTestDesign {
    /// Planned information, nested populations (smallest first) by analyses.
    pub information: InformationTable,
    pub graph: MultiplicityGraph,
    /// Spending family of each population.
    pub spending: Vec<Arc<dyn SpendingFunction>>,
    /// One-sided family-wise level.
    pub alpha: f64,
    pub backend: Arc<dyn ProbabilityBackend>,
}

impl ClosedTestDesign {
    pub fn new(
        information: InformationTable,
        graph: MultiplicityGraph,
        spending: Vec<Arc<dyn SpendingFunction>>,
        alpha: f64,
    ) -> Result<Self> {
        let pops = information.populations();
        if graph.len() != pops {
            return Err(Error::Config(format!(
                "graph has {} hypotheses for {pops} populations",
                graph.len()
            )));
        }
        if spending.len() != pops {
            return Err(Error::Config(format!(
                "{} spending functions for {pops} populations",
                spending.len()
            )));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::Config(format!("alpha must lie in (0, 0.5), got {alpha}")));
        }
        Ok(Self {
            information,
            graph,
            spending,
            alpha,
            backend: default_backend(),
        })
    }

    pub fn with_backend(mut self, backend: Arc<dyn ProbabilityBackend>) -> Self {
        self.backend = backend;
        self
    }

    pub fn populations(&self) -> usize {
        self.information.populations()
    }

    fn context(&self, mask: usize, information: &[Vec<f64>]) -> Result<SubsetContext> {
        let labels = members(mask);
        let weights = self.graph.subset_weights(&labels)?;
        let level = self.alpha * weights.iter().sum::<f64>();
        Ok(SubsetContext {
            mask,
            information: labels.iter().map(|&i| information[i].clone()).collect(),
            spending: labels.iter().map(|&i| self.spending[i].clone()).collect(),
            member_labels: labels,
            weights,
            alpha: self.alpha,
            level,
            backend: self.backend.clone(),
        })
    }
}

/// Everything a [`BoundAlgorithm`] needs for one intersection hypothesis.
/// Vectors are indexed by member position, not population label.
#[derive(Clone, Debug)]
pub struct SubsetContext {
    pub mask: usize,
    pub member_labels: Vec<usize>,
    /// `w_i(J)`.
    pub weights: Vec<f64>,
    /// Information of each member, observed through the current analysis
    /// and planned afterwards.
    pub information: Vec<Vec<f64>>,
    pub spending: Vec<Arc<dyn SpendingFunction>>,
    pub alpha: f64,
    /// Level the intersection test must hold: `alpha * sum w_i(J)`.
    pub level: f64,
    pub backend: Arc<dyn ProbabilityBackend>,
}

impl SubsetContext {
    pub fn analyses(&self) -> usize {
        self.information[0].len()
    }

    /// Member positions with positive weight.
    pub fn active(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&m| self.weights[m] > 0.0).collect()
    }

    /// `t_mj = n_mj / n_mK`.
    pub fn fraction(&self, m: usize, j: usize) -> f64 {
        let row = &self.information[m];
        row[j] / row[row.len() - 1]
    }

    /// Null probability that any member crosses its bound.
    pub fn union_crossing(&self, bounds: &[Vec<f64>]) -> Result<f64> {
        self.backend
            .crossing(&SequentialRect::new(self.information.clone(), bounds.to_vec()))
    }
}

/// Bounds of one intersection hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetBounds {
    /// Bit `i` set for population `i` in the subset.
    pub mask: usize,
    pub members: Vec<usize>,
    /// `w_i(J)` for each member.
    pub weights: Vec<f64>,
    /// Required level of the intersection test.
    pub level: f64,
    /// `c_ij(J)`: member by analysis; `+inf` (serialized as `null`) where a
    /// member cannot be rejected.
    #[serde(with = "serde_bounds")]
    pub bounds: Vec<Vec<f64>>,
    /// Inflation `alpha*_k(J)` solved at each analysis; entries after the
    /// last solve hold the inflation the planned bounds were derived with.
    pub alpha_star: Vec<f64>,
}

impl SubsetBounds {
    /// Bounds of population `label`, if it belongs to the subset.
    pub fn bounds_of(&self, label: usize) -> Option<&[f64]> {
        self.members
            .iter()
            .position(|&m| m == label)
            .map(|m| self.bounds[m].as_slice())
    }
}

/// Bounds for every nonempty subset of the populations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionBoundsTable {
    /// Registry name of the algorithm that produced the table.
    pub algorithm: String,
    pub alpha: f64,
    /// Information the bounds were derived from: observed for finalized
    /// analyses, planned afterwards.
    pub information: Vec<Vec<f64>>,
    /// Analyses whose bounds are final.
    pub finalized: usize,
    /// Ordered by subset bitmask.
    pub subsets: Vec<SubsetBounds>,
}

impl IntersectionBoundsTable {
    pub fn populations(&self) -> usize {
        self.information.len()
    }

    pub fn analyses(&self) -> usize {
        self.information.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, mask: usize) -> Option<&SubsetBounds> {
        self.subsets.iter().find(|s| s.mask == mask)
    }

    /// Bounds for the subset with exactly these population labels.
    pub fn subset_of(&self, labels: &[usize]) -> Option<&SubsetBounds> {
        self.subset(labels.iter().fold(0, |m, &i| m | 1 << i))
    }

    /// Null crossing probability of every intersection test, keyed by mask.
    pub fn level_checks(&self, backend: &dyn ProbabilityBackend) -> Result<BTreeMap<usize, f64>> {
        self.subsets
            .iter()
            .map(|s| {
                let info: Vec<Vec<f64>> = s.members.iter().map(|&i| self.information[i].clone()).collect();
                let zero = vec![vec![0.0; self.analyses()]; s.members.len()];
                Ok((s.mask, subset_level_check_with(backend, &info, &s.bounds, &zero)?))
            })
            .collect()
    }
}

/// Observed information and statistics at one analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisData {
    /// 1-based analysis number.
    pub analysis: usize,
    /// Cumulative information per population.
    #[serde(default)]
    pub information: Vec<f64>,
    /// Z statistic per population.
    #[serde(default)]
    pub statistics: Vec<f64>,
    /// The analysis was not performed; nothing is spent at it.
    #[serde(default)]
    pub skipped: bool,
}

/// Name -> algorithm constructor.
#[derive(Clone)]
pub struct AlgorithmRegistry {
    factories: BTreeMap<String, fn() -> Arc<dyn BoundAlgorithm>>,
}

impl Default for AlgorithmRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("1", || Arc::new(CurrentAndFuture));
        r.register("2", || Arc::new(CurrentOnly));
        r.register("3", || Arc::new(LargestPopulation));
        r
    }
}

impl AlgorithmRegistry {
    pub fn register(&mut self, name: &str, factory: fn() -> Arc<dyn BoundAlgorithm>) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn create(&self, name: &str) -> Result<Arc<dyn BoundAlgorithm>> {
        self.factories.get(name).map(|f| f()).ok_or_else(|| {
            Error::Config(format!(
                "unknown bound algorithm '{name}' (known: {})",
                self.factories.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

fn all_masks(pops: usize) -> Vec<usize> {
    (1..1usize << pops).collect()
}

/// Design-time bounds for every intersection hypothesis.
pub fn plan(design: &ClosedTestDesign, algorithm: &dyn BoundAlgorithm) -> Result<IntersectionBoundsTable> {
    let info = design.information.rows().to_vec();
    let subsets = all_masks(design.populations())
        .into_par_iter()
        .map(|mask| algorithm.plan(&design.context(mask, &info)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntersectionBoundsTable {
        algorithm: algorithm.name().to_string(),
        alpha: design.alpha,
        information: info,
        finalized: 0,
        subsets,
    })
}

/// Finalizes the bounds of analysis `data.analysis` given its observed
/// information. Earlier bounds are never changed.
pub fn update(
    design: &ClosedTestDesign,
    algorithm: &dyn BoundAlgorithm,
    table: &IntersectionBoundsTable,
    data: &AnalysisData,
) -> Result<IntersectionBoundsTable> {
    if table.algorithm != algorithm.name() {
        return Err(Error::Config(format!(
            "table was derived with algorithm {} but update requested algorithm {}",
            table.algorithm,
            algorithm.name()
        )));
    }
    let k = check_sequence(table, data)?;
    let mut out = table.clone();
    out.finalized = k + 1;
    if data.skipped {
        for s in &mut out.subsets {
            for row in &mut s.bounds {
                row[k] = f64::INFINITY;
            }
        }
        return Ok(out);
    }

    let pops = table.populations();
    if data.information.len() != pops {
        return Err(Error::Data(format!(
            "analysis {} reports information for {} populations, expected {pops}",
            data.analysis,
            data.information.len()
        )));
    }
    if k > 0 {
        for i in 0..pops {
            let prev = table.information[i][k - 1];
            if !(data.information[i] > prev) {
                return Err(Error::Data(format!(
                    "information of population {} did not increase ({prev} -> {}) at analysis {}",
                    i + 1,
                    data.information[i],
                    data.analysis
                )));
            }
        }
    }
    // observed information exactly as planned: the planned bounds already
    // solve this analysis
    if (0..pops).all(|i| data.information[i] == table.information[i][k]) {
        return Ok(out);
    }
    for i in 0..pops {
        out.information[i][k] = data.information[i];
    }
    validate_information(&out.information).map_err(|e| Error::Data(e.to_string()))?;

    let info = out.information.clone();
    out.subsets = table
        .subsets
        .par_iter()
        .map(|prior| algorithm.update(&design.context(prior.mask, &info)?, prior, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

fn check_sequence(table: &IntersectionBoundsTable, data: &AnalysisData) -> Result<usize> {
    if data.analysis == 0 || data.analysis > table.analyses() {
        return Err(Error::Data(format!(
            "analysis {} outside 1..={}",
            data.analysis,
            table.analyses()
        )));
    }
    if data.analysis != table.finalized + 1 {
        return Err(Error::Sequencing(format!(
            "analysis {} cannot be finalized after {} finalized analyses",
            data.analysis, table.finalized
        )));
    }
    Ok(data.analysis - 1)
}

/// `1 - Pr(Z_ik < b_ik for all i, k)` with `E(Z_ik) = drifts[i][k]`.
pub fn subset_level_check(information: &[Vec<f64>], bounds: &[Vec<f64>], drifts: &[Vec<f64>]) -> Result<f64> {
    subset_level_check_with(default_backend().as_ref(), information, bounds, drifts)
}

pub fn subset_level_check_with(
    backend: &dyn ProbabilityBackend,
    information: &[Vec<f64>],
    bounds: &[Vec<f64>],
    drifts: &[Vec<f64>],
) -> Result<f64> {
    backend.crossing(&SequentialRect::new(information.to_vec(), bounds.to_vec()).with_means(drifts.to_vec()))
}

/// Which statistics crossed in one intersection test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetDecision {
    pub members: Vec<usize>,
    pub rejected: bool,
    /// `(population, analysis)` pairs, 0-based and 1-based respectively.
    pub crossings: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// Rejected elementary hypotheses (population labels, ascending).
    pub rejected: Vec<usize>,
    pub subsets: Vec<SubsetDecision>,
    /// Analyses whose statistics were used.
    pub analyses: usize,
    pub table: IntersectionBoundsTable,
}

/// Full closed test on the statistics observed so far.
pub fn closed_test(
    table: &IntersectionBoundsTable,
    observed: &[AnalysisData],
    graph: &MultiplicityGraph,
) -> Result<TestOutcome> {
    let pops = table.populations();
    if graph.len() != pops {
        return Err(Error::Config(format!(
            "graph has {} hypotheses, bounds table {pops}",
            graph.len()
        )));
    }
    for (j, data) in observed.iter().enumerate() {
        if data.analysis != j + 1 {
            return Err(Error::Sequencing(format!(
                "expected data for analysis {}, got {}",
                j + 1,
                data.analysis
            )));
        }
        if data.analysis > table.finalized {
            return Err(Error::Sequencing(format!(
                "bounds of analysis {} are not finalized ({} finalized)",
                data.analysis, table.finalized
            )));
        }
        if data.skipped {
            continue;
        }
        if data.statistics.len() != pops || data.statistics.iter().any(|z| !z.is_finite()) {
            return Err(Error::Data(format!(
                "analysis {} needs {pops} finite statistics",
                data.analysis
            )));
        }
    }
    let z: Vec<Option<&[f64]>> = observed
        .iter()
        .map(|d| (!d.skipped).then_some(d.statistics.as_slice()))
        .collect();
    let decide = |s: &SubsetBounds| -> SubsetDecision {
        let mut crossings = Vec::new();
        for (m, &label) in s.members.iter().enumerate() {
            for (j, stats) in z.iter().enumerate() {
                if let Some(stats) = stats {
                    if stats[label] >= s.bounds[m][j] {
                        crossings.push((label, j + 1));
                    }
                }
            }
        }
        SubsetDecision {
            members: s.members.clone(),
            rejected: !crossings.is_empty(),
            crossings,
        }
    };
    let subsets: Vec<SubsetDecision> = table.subsets.iter().map(decide).collect();
    let rejected = (0..pops)
        .filter(|&i| {
            table
                .subsets
                .iter()
                .zip(&subsets)
                .filter(|(s, _)| s.mask >> i & 1 == 1)
                .all(|(_, d)| d.rejected)
        })
        .collect();
    Ok(TestOutcome {
        rejected,
        subsets,
        analyses: observed.len(),
        table: table.clone(),
    })
}

/// Closed-test rejections from statistics laid out as `z[population][analysis]`
/// over the first `analyses` looks. Used where building [`AnalysisData`] per
/// replicate would be wasteful.
pub fn rejected_from(table: &IntersectionBoundsTable, z: &[Vec<f64>], analyses: usize) -> Vec<bool> {
    let pops = table.populations();
    let subset_rejected: Vec<bool> = table
        .subsets
        .iter()
        .map(|s| {
            s.members.iter().enumerate().any(|(m, &label)| {
                (0..analyses).any(|j| z[label][j] >= s.bounds[m][j])
            })
        })
        .collect();
    (0..pops)
        .map(|i| {
            table
                .subsets
                .iter()
                .zip(&subset_rejected)
                .filter(|(s, _)| s.mask >> i & 1 == 1)
                .all(|(_, &r)| r)
        })
        .collect()
}
