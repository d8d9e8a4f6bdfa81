//! Trial-level calculations: drifts from effect sizes, population power,
//! required information, hazard-ratio bounds, expected event counts and
//! prevalence sweeps comparing CCS bounds with Bonferroni bounds.

use crate::closed_test::{self, AlgorithmRegistry, ClosedTestDesign, IntersectionBoundsTable};
use crate::correlation::{validate_prevalences, validate_timings, InformationTable};
use crate::crossing::{default_backend, BackendRegistry, ProbabilityBackend};
use crate::error::{Error, Result};
use crate::graph::MultiplicityGraph;
use crate::gs_single::{bounds_from_spending_with, crossing_prob_with, Drift};
use crate::normal::normal_sf;
use crate::spending::{FamilySpec, Spending};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Search range for required information.
pub const MIN_INFORMATION: u64 = 8;
pub const MAX_INFORMATION: u64 = 1_000_000;

/// Information scale used when only fractions matter.
const NOMINAL_TOTAL: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurvivalModel {
    /// Control-arm median survival, months.
    pub control_median: f64,
    /// Hazard ratio per population (experimental vs control).
    pub hazard_ratios: Vec<f64>,
    /// Annual probability of dropping out.
    #[serde(default)]
    pub annual_dropout: f64,
    /// Experimental:control allocation.
    #[serde(default = "one")]
    pub randomization_ratio: f64,
    /// Length of the uniform accrual window, months.
    #[serde(default = "default_accrual")]
    pub accrual_months: f64,
    /// Calendar time of the final analysis, months from first enrollment.
    /// Needed only to convert events into patients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study_months: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_accrual() -> f64 {
    24.0
}

fn default_power() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Endpoint {
    /// `E(Z) = sqrt(n) * theta` with `n` the sample size.
    Normal { effects: Vec<f64> },
    Survival(SurvivalModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    /// Cumulative prevalence of each nested population, ending at 1.
    pub prevalences: Vec<f64>,
    /// Planned information fractions, ending at 1.
    pub timings: Vec<f64>,
    /// One-sided family-wise level.
    pub alpha: f64,
    /// Initial graph weights; equal weights when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Graph transitions; weight passes evenly to the others when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<f64>>>,
    /// One family for all populations or one per population.
    pub spending: Vec<FamilySpec>,
    pub endpoint: Endpoint,
    #[serde(default = "default_power")]
    pub target_power: f64,
    /// Planned cumulative information (population by analysis). When
    /// omitted it is `prevalence * timing * N` with `N` the overall
    /// population's required information.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub information: Option<Vec<Vec<f64>>>,
    /// Probability backend name; `auto` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
}

impl DesignSpec {
    pub fn populations(&self) -> usize {
        self.prevalences.len()
    }

    pub fn validate(&self) -> Result<()> {
        validate_prevalences(&self.prevalences).map_err(config)?;
        validate_timings(&self.timings).map_err(config)?;
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        let pops = self.populations();
        if self.spending.len() != 1 && self.spending.len() != pops {
            return Err(Error::Config(format!(
                "spending must list 1 or {pops} families, got {}",
                self.spending.len()
            )));
        }
        if !(self.target_power >= 0.5 && self.target_power <= 0.999) {
            return Err(Error::Config(format!(
                "target_power must lie in [0.5, 0.999], got {}",
                self.target_power
            )));
        }
        match &self.endpoint {
            Endpoint::Normal { effects } => {
                if effects.len() != pops {
                    return Err(Error::Config(format!("{} effects for {pops} populations", effects.len())));
                }
                if let Some(e) = effects.iter().find(|e| !e.is_finite()) {
                    return Err(Error::Config(format!("effect {e} is not finite")));
                }
            }
            Endpoint::Survival(m) => m.validate(pops)?,
        }
        self.graph()?;
        self.spending_functions()?;
        Ok(())
    }

    pub fn graph(&self) -> Result<MultiplicityGraph> {
        let pops = self.populations();
        let eq = MultiplicityGraph::equal(pops)?;
        MultiplicityGraph::new(
            self.weights.clone().unwrap_or(eq.weights),
            self.transitions.clone().unwrap_or(eq.transitions),
        )
    }

    pub fn spending_functions(&self) -> Result<Vec<Arc<dyn crate::spending::SpendingFunction>>> {
        let fams: Vec<Arc<dyn crate::spending::SpendingFunction>> =
            self.spending.iter().map(FamilySpec::resolve).collect::<Result<_>>()?;
        Ok(if fams.len() == 1 {
            vec![fams[0].clone(); self.populations()]
        } else {
            fams
        })
    }

    pub fn backend(&self) -> Result<Arc<dyn ProbabilityBackend>> {
        match &self.backend {
            None => Ok(default_backend()),
            Some(name) => BackendRegistry::default().create(name),
        }
    }

    /// Planned information: the configured table, or fractions on an
    /// arbitrary common scale.
    pub fn planned_information(&self) -> Result<InformationTable> {
        match &self.information {
            Some(n) => {
                let table = InformationTable::new(n.clone()).map_err(config)?;
                if table.populations() != self.populations() || table.analyses() != self.timings.len() {
                    return Err(Error::Config(format!(
                        "information must be {} x {}",
                        self.populations(),
                        self.timings.len()
                    )));
                }
                Ok(table)
            }
            None => InformationTable::planned(&self.prevalences, &self.timings, NOMINAL_TOTAL),
        }
    }

    pub fn closed_test_design(&self) -> Result<ClosedTestDesign> {
        self.validate()?;
        Ok(ClosedTestDesign::new(
            self.planned_information()?,
            self.graph()?,
            self.spending_functions()?,
            self.alpha,
        )?
        .with_backend(self.backend()?))
    }

    /// Drift per unit square-root information of each population.
    pub fn unit_drifts(&self) -> Result<Vec<f64>> {
        match &self.endpoint {
            Endpoint::Normal { effects } => Ok(effects.clone()),
            Endpoint::Survival(m) => m
                .hazard_ratios
                .iter()
                .map(|&hr| survival_unit_drift(hr, m.randomization_ratio))
                .collect(),
        }
    }
}

fn config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl SurvivalModel {
    pub fn validate(&self, populations: usize) -> Result<()> {
        if self.hazard_ratios.len() != populations {
            return Err(Error::Config(format!(
                "{} hazard ratios for {populations} populations",
                self.hazard_ratios.len()
            )));
        }
        for &hr in &self.hazard_ratios {
            if !(hr > 0.0 && hr < 1.0) {
                return Err(Error::Config(format!("hazard ratio must lie in (0, 1), got {hr}")));
            }
        }
        if !(self.control_median > 0.0) {
            return Err(Error::Config("control_median must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.annual_dropout) {
            return Err(Error::Config("annual_dropout must lie in [0, 1)".into()));
        }
        if !(self.randomization_ratio > 0.0) {
            return Err(Error::Config("randomization_ratio must be positive".into()));
        }
        if !(self.accrual_months >= 0.0) {
            return Err(Error::Config("accrual_months must be nonnegative".into()));
        }
        if let Some(t) = self.study_months {
            if !(t > 0.0) {
                return Err(Error::Config("study_months must be positive".into()));
            }
        }
        Ok(())
    }

    fn control_hazard(&self) -> f64 {
        std::f64::consts::LN_2 / self.control_median
    }

    fn dropout_hazard(&self) -> f64 {
        -(1.0 - self.annual_dropout).ln() / 12.0
    }
}

/// `E(Z_k) = sqrt(n_k) * theta`.
pub fn drift(theta: f64, information: &[f64]) -> Result<Drift> {
    Drift::from_effect(information, theta)
}

/// Log-rank drift per square-root event: `-ln(HR) sqrt(r) / (1 + r)`.
pub fn survival_unit_drift(hazard_ratio: f64, ratio: f64) -> Result<f64> {
    if !(hazard_ratio > 0.0 && hazard_ratio < 1.0) {
        return Err(Error::Config(format!(
            "hazard ratio must lie in (0, 1) for superiority, got {hazard_ratio}"
        )));
    }
    Ok(-hazard_ratio.ln() * ratio.sqrt() / (1.0 + ratio))
}

/// Log-rank drift with 1:1 randomization at `events`: `-ln(HR) sqrt(d / 4)`.
pub fn survival_drift(hazard_ratio: f64, events: &[f64]) -> Result<Drift> {
    let u = survival_unit_drift(hazard_ratio, 1.0)?;
    Drift::from_effect(events, u)
}

/// Hazard ratio at which the log-rank statistic equals `z` with `events`
/// events under 1:1 randomization.
pub fn hr_bound(z: f64, events: f64) -> f64 {
    (-2.0 * z / events.sqrt()).exp()
}

/// Probability of crossing `bounds` at information fractions `timings` when
/// the final-analysis drift is `drift_final`.
pub fn population_power(timings: &[f64], bounds: &[f64], drift_final: f64) -> Result<f64> {
    population_power_with(default_backend().as_ref(), timings, bounds, drift_final)
}

pub fn population_power_with(
    backend: &dyn ProbabilityBackend,
    timings: &[f64],
    bounds: &[f64],
    drift_final: f64,
) -> Result<f64> {
    let drift = Drift::from_final(timings, drift_final);
    Ok(crossing_prob_with(backend, timings, bounds, &drift)?.total())
}

/// Smallest integer final information `n` in
/// `[MIN_INFORMATION, MAX_INFORMATION]` whose power reaches `target` when the
/// final drift is `unit_drift * sqrt(n)`.
pub fn required_information(
    backend: &dyn ProbabilityBackend,
    timings: &[f64],
    bounds: &[f64],
    unit_drift: f64,
    target: f64,
) -> Result<u64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("target power {target} outside (0, 1)")));
    }
    let power = |n: u64| population_power_with(backend, timings, bounds, unit_drift * (n as f64).sqrt());
    if power(MIN_INFORMATION)? >= target {
        return Ok(MIN_INFORMATION);
    }
    if power(MAX_INFORMATION)? < target {
        return Err(Error::Numerical(format!(
            "power {target} is not reached with {MAX_INFORMATION} units of information"
        )));
    }
    let (mut lo, mut hi) = (MIN_INFORMATION, MAX_INFORMATION);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if power(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Expected events among `enrollment` patients by calendar time `months`,
/// with uniform accrual, exponential survival and exponential dropout.
/// `hazard_ratio` applies to the experimental arm.
pub fn expected_events(model: &SurvivalModel, enrollment: f64, hazard_ratio: f64, months: f64) -> f64 {
    if months <= 0.0 || enrollment <= 0.0 {
        return 0.0;
    }
    let r = model.randomization_ratio;
    let eta = model.dropout_hazard();
    let lc = model.control_hazard();
    let arms = [(1.0 / (1.0 + r), lc), (r / (1.0 + r), lc * hazard_ratio)];
    let a = model.accrual_months;
    arms.iter()
        .map(|&(share, lambda)| {
            let h = lambda + eta;
            let frac = if a <= 0.0 {
                -(-h * months).exp_m1()
            } else {
                let enrolled = a.min(months);
                // (1/a) * integral over entry times u in [0, enrolled] of 1 - exp(-h (T - u))
                (enrolled - ((-h * (months - enrolled)).exp() - (-h * months).exp()) / h) / a
            };
            share * enrollment * lambda / h * frac
        })
        .sum()
}

/// Patients needed for `events` expected events by calendar time `months`.
pub fn enrollment_for_events(model: &SurvivalModel, hazard_ratio: f64, events: f64, months: f64) -> Result<f64> {
    let per_patient = expected_events(model, 1.0, hazard_ratio, months);
    if !(per_patient > 0.0) {
        return Err(Error::Domain("no events are expected by that time".into()));
    }
    Ok(events / per_patient)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Each population tested at its unadjusted share `w_i * alpha`.
    Bonferroni,
    /// Bounds of the full intersection under the complete correlation.
    Ccs,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bonferroni => "bonferroni",
            Method::Ccs => "ccs",
        }
    }
}

/// One population under one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationColumn {
    pub method: Method,
    /// 1-based population number; the last is the overall population.
    pub population: usize,
    /// Level the population's bounds spend: `w_i * alpha` or `w_i * alpha*`.
    pub nominal_level: f64,
    pub bounds: Vec<f64>,
    /// `1 - Phi(b_k)`.
    pub nominal: Vec<f64>,
    /// Required final information (events for survival endpoints).
    pub required: u64,
    /// Power at the Bonferroni-required information of the population.
    pub power_at_reference: f64,
    /// Hazard-ratio bounds against overall-population events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hr_bounds: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub alpha: f64,
    pub prevalences: Vec<f64>,
    pub timings: Vec<f64>,
    pub target_power: f64,
    pub algorithm: String,
    pub columns: Vec<PopulationColumn>,
    /// Patients needed for the overall population's events, per method.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub enrollment: Vec<(Method, f64)>,
}

impl DesignReport {
    pub fn column(&self, method: Method, population: usize) -> Option<&PopulationColumn> {
        self.columns
            .iter()
            .find(|c| c.method == method && c.population == population)
    }
}

/// Bounds of each population under Bonferroni splitting and under the
/// closed-test table's full-intersection bounds.
pub struct MethodBounds {
    pub bonferroni: Vec<Vec<f64>>,
    pub bonferroni_levels: Vec<f64>,
    pub ccs: Vec<Vec<f64>>,
    pub ccs_levels: Vec<f64>,
}

pub fn method_bounds(spec: &DesignSpec, design: &ClosedTestDesign, table: &IntersectionBoundsTable) -> Result<MethodBounds> {
    let pops = spec.populations();
    let full = table
        .subset((1 << pops) - 1)
        .ok_or_else(|| Error::Invariant("bounds table lacks the full intersection".into()))?;
    let mut out = MethodBounds {
        bonferroni: Vec::new(),
        bonferroni_levels: Vec::new(),
        ccs: full.bounds.clone(),
        ccs_levels: full
            .weights
            .iter()
            .zip(&full.alpha_star)
            .map(|(w, a)| w * a)
            .collect(),
    };
    for i in 0..pops {
        let level = full.weights[i] * spec.alpha;
        let b = if level > 0.0 {
            let s = Spending::new(design.spending[i].clone(), level)?;
            bounds_from_spending_with(design.backend.as_ref(), &spec.timings, &s)?.bounds
        } else {
            vec![f64::INFINITY; spec.timings.len()]
        };
        out.bonferroni.push(b);
        out.bonferroni_levels.push(level);
    }
    Ok(out)
}

/// Plans the closed test and compares CCS with Bonferroni bounds population
/// by population.
pub fn design_report(spec: &DesignSpec, algorithm: &str) -> Result<(DesignReport, IntersectionBoundsTable)> {
    let design = spec.closed_test_design()?;
    let alg = AlgorithmRegistry::default().create(algorithm)?;
    let table = closed_test::plan(&design, alg.as_ref())?;
    let mb = method_bounds(spec, &design, &table)?;
    let unit = spec.unit_drifts()?;
    let pops = spec.populations();
    let backend = design.backend.as_ref();
    let t = &spec.timings;
    let methods: &[Method] = if pops == 1 { &[Method::Bonferroni] } else { &[Method::Bonferroni, Method::Ccs] };

    let mut reference = vec![0u64; pops];
    let mut columns = Vec::new();
    for &method in methods {
        for i in 0..pops {
            let (bounds, level) = match method {
                Method::Bonferroni => (&mb.bonferroni[i], mb.bonferroni_levels[i]),
                Method::Ccs => (&mb.ccs[i], mb.ccs_levels[i]),
            };
            if level <= 0.0 {
                continue;
            }
            let required = required_information(backend, t, bounds, unit[i], spec.target_power)?;
            if method == Method::Bonferroni {
                reference[i] = required;
            }
            let power_at_reference =
                population_power_with(backend, t, bounds, unit[i] * (reference[i] as f64).sqrt())?;
            columns.push(PopulationColumn {
                method,
                population: i + 1,
                nominal_level: level,
                bounds: bounds.clone(),
                nominal: bounds.iter().map(|&b| normal_sf(b)).collect(),
                required,
                power_at_reference,
                hr_bounds: None,
            });
        }
    }

    let mut enrollment = Vec::new();
    if let Endpoint::Survival(model) = &spec.endpoint {
        for &method in methods {
            let Some(overall) = columns.iter().find(|c| c.method == method && c.population == pops) else {
                continue;
            };
            let events = overall.required as f64;
            for c in columns.iter_mut().filter(|c| c.method == method) {
                c.hr_bounds = Some(
                    c.bounds
                        .iter()
                        .zip(t)
                        .map(|(&z, &tk)| hr_bound(z, events * tk))
                        .collect(),
                );
            }
            if let Some(months) = model.study_months {
                let n = enrollment_for_events(model, model.hazard_ratios[pops - 1], events, months)?;
                enrollment.push((method, n));
            }
        }
    }

    let mut table = table;
    if spec.information.is_none() {
        // bounds depend on fractions only; put the table on the scale of the
        // overall population's required information so updates can compare
        // observed counts with it
        let method = if pops == 1 { Method::Bonferroni } else { Method::Ccs };
        if let Some(c) = columns.iter().find(|c| c.method == method && c.population == pops) {
            table.information = InformationTable::planned(&spec.prevalences, t, c.required as f64)?.rows().to_vec();
        }
    }

    let report = DesignReport {
        alpha: spec.alpha,
        prevalences: spec.prevalences.clone(),
        timings: spec.timings.clone(),
        target_power: spec.target_power,
        algorithm: alg.name().to_string(),
        columns,
        enrollment,
    };
    Ok((report, table))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    /// 1 = subgroup, 2 = overall.
    pub pop: usize,
    pub method: Method,
    pub nominal_alpha: f64,
    /// Power at the Bonferroni-required sample size.
    pub power: f64,
    pub n_required: u64,
}

/// For each subgroup prevalence in `grid`, plans a two-population design
/// with subgroup effect `subgroup_effect` and overall effect
/// `sqrt(p) * subgroup_effect`, and reports both methods.
pub fn prevalence_sweep(base: &DesignSpec, grid: &[f64], subgroup_effect: f64, algorithm: &str) -> Result<Vec<SweepRow>> {
    if base.populations() != 2 {
        return Err(Error::Config("a prevalence sweep needs exactly two populations".into()));
    }
    if let Some(p) = grid.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::Config(format!("prevalence {p} outside (0, 1]")));
    }
    let per_p: Vec<Vec<SweepRow>> = grid
        .par_iter()
        .map(|&p| -> Result<Vec<SweepRow>> {
            if p >= 1.0 {
                return coincident_rows(base, subgroup_effect, algorithm);
            }
            let mut spec = base.clone();
            spec.prevalences = vec![p, 1.0];
            spec.endpoint = Endpoint::Normal {
                effects: vec![subgroup_effect, overall_effect(subgroup_effect, p)],
            };
            let (report, _) = design_report(&spec, algorithm)?;
            let mut rows = Vec::new();
            for method in [Method::Bonferroni, Method::Ccs] {
                for pop in 1..=2 {
                    let Some(c) = report.column(method, pop) else { continue };
                    rows.push(SweepRow {
                        p,
                        pop,
                        method,
                        nominal_alpha: c.nominal_level,
                        power: c.power_at_reference,
                        n_required: c.required,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_p.into_iter().flatten().collect())
}

/// Rows at `p = 1`, where both populations are the same: Bonferroni still
/// splits alpha by the graph weights, the correlated test spends all of it.
fn coincident_rows(base: &DesignSpec, effect: f64, algorithm: &str) -> Result<Vec<SweepRow>> {
    let mut single = base.clone();
    single.prevalences = vec![1.0];
    single.endpoint = Endpoint::Normal { effects: vec![effect] };
    single.weights = None;
    single.transitions = None;
    single.spending.truncate(1);
    let (report, _) = design_report(&single, algorithm)?;
    let full = report
        .column(Method::Bonferroni, 1)
        .ok_or_else(|| Error::Invariant("single-population report has no column".into()))?;

    let backend = base.backend()?;
    let spending = base.spending_functions()?;
    let weights = base.graph()?.weights;
    let mut rows = Vec::new();
    let mut reference = [0u64; 2];
    for pop in 1..=2 {
        let level = weights[pop - 1] * base.alpha;
        let s = Spending::new(spending[pop - 1].clone(), level)?;
        let bounds = bounds_from_spending_with(backend.as_ref(), &base.timings, &s)?.bounds;
        let n = required_information(backend.as_ref(), &base.timings, &bounds, effect, base.target_power)?;
        reference[pop - 1] = n;
        rows.push(SweepRow {
            p: 1.0,
            pop,
            method: Method::Bonferroni,
            nominal_alpha: level,
            power: population_power_with(backend.as_ref(), &base.timings, &bounds, effect * (n as f64).sqrt())?,
            n_required: n,
        });
    }
    for pop in 1..=2 {
        rows.push(SweepRow {
            p: 1.0,
            pop,
            method: Method::Ccs,
            nominal_alpha: full.nominal_level,
            power: population_power_with(
                backend.as_ref(),
                &base.timings,
                &full.bounds,
                effect * (reference[pop - 1] as f64).sqrt(),
            )?,
            n_required: full.required,
        });
    }
    Ok(rows)
}

/// Overall-population effect when only the subgroup benefits.
pub fn overall_effect(subgroup_effect: f64, prevalence: f64) -> f64 {
    prevalence.sqrt() * subgroup_effect
}
