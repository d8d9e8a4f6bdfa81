//! Correlation of test statistics across nested populations and analyses.
//!
//! For statistics `Z_ik` (population `i`, analysis `k`) built from cumulative
//! information `n_ik`, the covariance is the information the two statistics
//! share divided by the geometric mean of their own information:
//! `n_{min(i,i'), min(k,k')} / sqrt(n_ik * n_i'k')`.

use crate::error::{Error, Result};
use crate::mvn::CorrelationMatrix;
use serde::{Deserialize, Serialize};

/// Cumulative information `n[i][k]` for nested populations (smallest first,
/// last = overall) at successive analyses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformationTable {
    n: Vec<Vec<f64>>,
}

impl InformationTable {
    pub fn new(n: Vec<Vec<f64>>) -> Result<Self> {
        validate_information(&n)?;
        Ok(Self { n })
    }

    /// `n_ik = prevalence_i * t_k * total`.
    pub fn planned(prevalences: &[f64], timings: &[f64], total: f64) -> Result<Self> {
        validate_prevalences(prevalences)?;
        validate_timings(timings)?;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!("total information must be positive, got {total}")));
        }
        let n = prevalences
            .iter()
            .map(|p| timings.iter().map(|t| p * t * total).collect())
            .collect();
        Self::new(n)
    }

    pub fn populations(&self) -> usize {
        self.n.len()
    }

    pub fn analyses(&self) -> usize {
        self.n.first().map_or(0, Vec::len)
    }

    pub fn get(&self, population: usize, analysis: usize) -> f64 {
        self.n[population][analysis]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.n
    }

    /// `t_ik = n_ik / n_iK`.
    pub fn fraction(&self, population: usize, analysis: usize) -> f64 {
        let row = &self.n[population];
        row[analysis] / row[row.len() - 1]
    }

    /// Every statistic in analysis-major order `(1,1), (2,1), ..., (I,K)`.
    pub fn analysis_major_order(&self) -> Vec<StatIndex> {
        (0..self.analyses())
            .flat_map(|k| (0..self.populations()).map(move |i| StatIndex::new(i, k)))
            .collect()
    }

    /// Same table with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.n
                .iter()
                .map(|r| r.iter().map(|v| v * factor).collect())
                .collect(),
        )
    }
}

/// Checks positivity, strict growth over analyses and nesting across populations.
pub fn validate_information(n: &[Vec<f64>]) -> Result<()> {
    let Some(first) = n.first() else {
        return Err(Error::Invariant("information table has no populations".into()));
    };
    let k = first.len();
    if k == 0 {
        return Err(Error::Invariant("information table has no analyses".into()));
    }
    for (i, row) in n.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Invariant(format!(
                "population {} has {} analyses, expected {k}",
                i + 1,
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invariant(format!(
                    "information n[{}][{}] = {v} must be positive",
                    i + 1,
                    j + 1
                )));
            }
            if j > 0 && v <= row[j - 1] {
                return Err(Error::Invariant(format!(
                    "information for population {} not strictly increasing at analysis {}",
                    i + 1,
                    j + 1
                )));
            }
        }
        if i > 0 {
            for j in 0..k {
                if n[i - 1][j] > row[j] {
                    return Err(Error::Invariant(format!(
                        "nesting violated at analysis {}: population {} has more information ({}) than population {} ({})",
                        j + 1,
                        i,
                        n[i - 1][j],
                        i + 1,
                        row[j]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Prevalences of nested populations: strictly increasing, in (0, 1], last = 1.
pub fn validate_prevalences(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Domain("no populations".into()));
    }
    for (i, &v) in p.iter().enumerate() {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!(
                "prevalence of population {} must lie in (0, 1], got {v}",
                i + 1
            )));
        }
        if i > 0 && v <= p[i - 1] {
            return Err(Error::Invariant(format!(
                "populations must be strictly nested: prevalence {} of population {} does not exceed {} of population {}",
                v,
                i + 1,
                p[i - 1],
                i
            )));
        }
    }
    if (p[p.len() - 1] - 1.0).abs() > 1e-12 {
        return Err(Error::Invariant(
            "the last population must be the overall population (prevalence 1)".into(),
        ));
    }
    Ok(())
}

/// Analysis timings: strictly increasing information fractions ending at 1.
pub fn validate_timings(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::Domain("no analyses".into()));
    }
    for (k, &v) in t.iter().enumerate() {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!("timing {} = {v} outside (0, 1]", k + 1)));
        }
        if k > 0 && v <= t[k - 1] {
            return Err(Error::Domain("timings must be strictly increasing".into()));
        }
    }
    if (t[t.len() - 1] - 1.0).abs() > 1e-12 {
        return Err(Error::Domain("the last timing must be 1".into()));
    }
    Ok(())
}

/// Position of a statistic: population, analysis and optionally treatment arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatIndex {
    pub population: usize,
    pub analysis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<usize>,
}

impl StatIndex {
    pub fn new(population: usize, analysis: usize) -> Self {
        Self {
            population,
            analysis,
            arm: None,
        }
    }

    pub fn with_arm(arm: usize, population: usize, analysis: usize) -> Self {
        Self {
            population,
            analysis,
            arm: Some(arm),
        }
    }
}

/// Correlation between two statistics of the same comparison.
#[inline]
pub fn ccs_entry(n: &[Vec<f64>], a: StatIndex, b: StatIndex) -> f64 {
    let shared = n[a.population.min(b.population)][a.analysis.min(b.analysis)];
    shared / (n[a.population][a.analysis] * n[b.population][b.analysis]).sqrt()
}

/// Complete correlation structure of the statistics listed in `order`.
pub fn ccs_matrix(info: &InformationTable, order: &[StatIndex]) -> Result<CorrelationMatrix> {
    check_order(order, info.populations(), info.analyses())?;
    CorrelationMatrix::from_fn(order.len(), |r, c| ccs_entry(info.rows(), order[r], order[c]))
}

/// Planning-stage structure for a subgroup of prevalence `p` inside the
/// overall population, statistics ordered `(Z_11, Z_21, Z_12, Z_22, ...)`.
/// Information is taken proportional to `p * t_k` and `t_k`; the result does
/// not depend on the absolute scale.
pub fn ccs_matrix_planned(prevalence: f64, timings: &[f64]) -> Result<CorrelationMatrix> {
    if !(prevalence > 0.0 && prevalence <= 1.0) {
        return Err(Error::Domain(format!(
            "prevalence must lie in (0, 1], got {prevalence}"
        )));
    }
    validate_timings(timings)?;
    // built directly: p = 1 gives two coinciding populations, which the
    // strict nesting check of `InformationTable` rejects
    let n: Vec<Vec<f64>> = vec![
        timings.iter().map(|t| prevalence * t).collect(),
        timings.to_vec(),
    ];
    let order: Vec<StatIndex> = (0..timings.len())
        .flat_map(|k| (0..2).map(move |i| StatIndex::new(i, k)))
        .collect();
    CorrelationMatrix::from_fn(order.len(), |r, c| ccs_entry(&n, order[r], order[c]))
}

fn check_order(order: &[StatIndex], populations: usize, analyses: usize) -> Result<()> {
    if order.is_empty() {
        return Err(Error::Domain("no statistics requested".into()));
    }
    for (m, s) in order.iter().enumerate() {
        if s.population >= populations || s.analysis >= analyses {
            return Err(Error::Domain(format!(
                "statistic {s:?} outside a {populations} x {analyses} table"
            )));
        }
        if order[..m].contains(s) {
            return Err(Error::Domain(format!("statistic {s:?} listed twice")));
        }
    }
    Ok(())
}

/// Observation (or event) counts for several treatment arms compared against
/// one shared control arm. Each table is population x analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedControlInformation {
    pub control: Vec<Vec<f64>>,
    pub arms: Vec<Vec<Vec<f64>>>,
}

impl SharedControlInformation {
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Domain("at least one treatment arm is required".into()));
        }
        if self.control.is_empty() {
            return Err(Error::Domain("shared control arm has no information".into()));
        }
        validate_information(&self.control)?;
        for arm in &self.arms {
            validate_information(arm)?;
            if arm.len() != self.control.len() || arm[0].len() != self.control[0].len() {
                return Err(Error::Domain("arm and control tables differ in shape".into()));
            }
        }
        Ok(())
    }

    /// Information of the arm-vs-control comparison, `n_A n_0 / (n_A + n_0)`.
    pub fn comparison_information(&self, arm: usize) -> Vec<Vec<f64>> {
        self.arms[arm]
            .iter()
            .zip(&self.control)
            .map(|(a, c)| a.iter().zip(c).map(|(na, n0)| na * n0 / (na + n0)).collect())
            .collect()
    }
}

/// Correlation of arm-vs-control statistics when all arms share one control.
/// Every `order` entry must carry an arm label.
///
/// With `Z_A = (mean_A - mean_0) / sqrt(1/n_A + 1/n_0)`, two statistics share
/// the observations of the arm (same arm only) and of the control, so the
/// correlation is the sum of the two shared-mean covariances over the product
/// of standard errors.
pub fn shared_control_matrix(
    info: &SharedControlInformation,
    order: &[StatIndex],
) -> Result<CorrelationMatrix> {
    info.validate()?;
    let (pops, analyses) = (info.control.len(), info.control[0].len());
    check_order(order, pops, analyses)?;
    for s in order {
        match s.arm {
            Some(a) if a < info.arms.len() => {}
            Some(a) => return Err(Error::Domain(format!("arm {a} does not exist"))),
            None => return Err(Error::Domain(format!("statistic {s:?} has no arm label"))),
        }
    }
    CorrelationMatrix::from_fn(order.len(), |r, c| {
        shared_control_entry(info, order[r], order[c])
    })
}

fn shared_control_entry(info: &SharedControlInformation, a: StatIndex, b: StatIndex) -> f64 {
    let (arm_a, arm_b) = (a.arm.unwrap_or(0), b.arm.unwrap_or(0));
    let cell = |t: &Vec<Vec<f64>>, s: StatIndex| t[s.population][s.analysis];
    let shared = |t: &Vec<Vec<f64>>| {
        t[a.population.min(b.population)][a.analysis.min(b.analysis)]
    };
    let var_mean = |t: &Vec<Vec<f64>>, s: StatIndex| 1.0 / cell(t, s);
    // Cov(mean over cell s, mean over cell s') = shared / (n_s n_s')
    let cov_means = |t: &Vec<Vec<f64>>| shared(t) / (cell(t, a) * cell(t, b));

    let ctrl = &info.control;
    let mut cov = cov_means(ctrl);
    if arm_a == arm_b {
        cov += cov_means(&info.arms[arm_a]);
    }
    let se_a = (var_mean(&info.arms[arm_a], a) + var_mean(ctrl, a)).sqrt();
    let se_b = (var_mean(&info.arms[arm_b], b) + var_mean(ctrl, b)).sqrt();
    cov / (se_a * se_b)
}
