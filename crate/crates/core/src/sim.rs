//! Monte Carlo checks of error rates and power: correlated Z statistics are
//! drawn from the complete correlation structure and run through the closed
//! test.
//!
//! Replications are split into fixed-size chunks, each with its own ChaCha
//! stream, so results do not depend on the number of worker threads.

use crate::closed_test::{self, rejected_from, AnalysisData, BoundAlgorithm, ClosedTestDesign, IntersectionBoundsTable};
use crate::correlation::{ccs_matrix, InformationTable, StatIndex};
use crate::error::{Error, Result};
use crate::mvn::CorrelationMatrix;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK: u64 = 4096;

/// Draws `N(drift, corr)` vectors through a lower-triangular factor.
#[derive(Clone, Debug)]
pub struct Sampler {
    dim: usize,
    /// Row-major lower-triangular factor.
    factor: Vec<f64>,
    drift: Vec<f64>,
}

impl Sampler {
    pub fn new(corr: &CorrelationMatrix, drift: &[f64]) -> Result<Self> {
        let n = corr.dim();
        if drift.len() != n {
            return Err(Error::Domain(format!("drift of length {} for dimension {n}", drift.len())));
        }
        if let Some(d) = drift.iter().find(|d| !d.is_finite()) {
            return Err(Error::Domain(format!("drift {d} is not finite")));
        }
        let m = DMatrix::from_row_slice(n, n, corr.as_slice());
        let l = match m.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                // singular but PSD (e.g. coincident populations): V sqrt(L)
                let eig = m.symmetric_eigen();
                let mut f = eig.eigenvectors.clone();
                for (j, &v) in eig.eigenvalues.iter().enumerate() {
                    if v < -crate::mvn::PSD_REPAIR_TOL {
                        return Err(Error::Matrix(format!("eigenvalue {v} below repair tolerance")));
                    }
                    f.column_mut(j).scale_mut(v.max(0.0).sqrt());
                }
                f
            }
        };
        let mut factor = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                factor[i * n + j] = l[(i, j)];
            }
        }
        Ok(Self {
            dim: n,
            factor,
            drift: drift.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        let n = self.dim;
        for e in scratch.iter_mut() {
            *e = StandardNormal.sample(rng);
        }
        for i in 0..n {
            let row = &self.factor[i * n..(i + 1) * n];
            out[i] = self.drift[i] + row.iter().zip(scratch.iter()).map(|(a, e)| a * e).sum::<f64>();
        }
    }
}

/// One draw from `N(drift, ccs)`.
pub fn sample_statistics(ccs: &CorrelationMatrix, drift: &[f64], seed: u64) -> Result<Vec<f64>> {
    let s = Sampler::new(ccs, drift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = vec![0.0; s.dim()];
    let mut out = vec![0.0; s.dim()];
    s.draw(&mut rng, &mut scratch, &mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replications: u64,
    pub seed: u64,
    /// Information actually accrued, which fixes the correlation of the
    /// simulated statistics.
    pub information: Vec<Vec<f64>>,
    /// `E(Z_ik)`, population by analysis. Rows of zeros are true nulls.
    pub drift: Vec<Vec<f64>>,
    /// Bounds used by the closed test, finalized through every analysis.
    pub table: IntersectionBoundsTable,
    /// Worker cap; all cores when `None`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub estimate: f64,
    pub standard_error: f64,
    pub replications: u64,
}

impl SimResult {
    fn from_count(count: u64, n: u64) -> Self {
        let p = count as f64 / n as f64;
        Self {
            estimate: p,
            standard_error: (p * (1.0 - p) / n as f64).sqrt(),
            replications: n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    /// 1-based population.
    pub population: usize,
    /// Rejection rate of the elementary hypothesis by the closed test.
    pub closed_test: SimResult,
    /// Rate at which the population's statistic crosses its bounds in the
    /// full intersection.
    pub marginal: SimResult,
}

#[derive(Default, Clone)]
struct Counts {
    any_null: u64,
    rejected: Vec<u64>,
    marginal: Vec<u64>,
}

impl Counts {
    fn add(mut self, other: Counts) -> Counts {
        self.any_null += other.any_null;
        for (a, b) in self.rejected.iter_mut().zip(&other.rejected) {
            *a += b;
        }
        for (a, b) in self.marginal.iter_mut().zip(&other.marginal) {
            *a += b;
        }
        self
    }
}

fn validate(config: &SimConfig) -> Result<()> {
    if config.replications == 0 {
        return Err(Error::Config("replications must be positive".into()));
    }
    let t = &config.table;
    let (pops, k) = (t.populations(), t.analyses());
    for (name, rows) in [("information", &config.information), ("drift", &config.drift)] {
        if rows.len() != pops || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("{name} must be {pops} x {k}")));
        }
    }
    if t.finalized != k {
        return Err(Error::Sequencing(format!(
            "simulation needs bounds finalized through all {k} analyses, {} are",
            t.finalized
        )));
    }
    Ok(())
}

fn run(config: &SimConfig) -> Result<Counts> {
    validate(config)?;
    let info = InformationTable::new(config.information.clone())?;
    let order = info.analysis_major_order();
    let corr = ccs_matrix(&info, &order)?;
    let drift: Vec<f64> = order.iter().map(|s| config.drift[s.population][s.analysis]).collect();
    let sampler = Sampler::new(&corr, &drift)?;
    let (pops, k) = (info.populations(), info.analyses());
    let null: Vec<bool> = config.drift.iter().map(|r| r.iter().all(|&d| d == 0.0)).collect();
    let full = config
        .table
        .subset((1 << pops) - 1)
        .ok_or_else(|| Error::Invariant("bounds table lacks the full intersection".into()))?;

    let chunks = config.replications.div_ceil(CHUNK);
    let work = |c: u64| -> Counts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(c);
        let reps = CHUNK.min(config.replications - c * CHUNK);
        let mut scratch = vec![0.0; sampler.dim()];
        let mut flat = vec![0.0; sampler.dim()];
        let mut z = vec![vec![0.0; k]; pops];
        let mut counts = Counts {
            any_null: 0,
            rejected: vec![0; pops],
            marginal: vec![0; pops],
        };
        for _ in 0..reps {
            sampler.draw(&mut rng, &mut scratch, &mut flat);
            for (s, &v) in order.iter().zip(&flat) {
                let StatIndex { population, analysis, .. } = *s;
                z[population][analysis] = v;
            }
            let rejected = rejected_from(&config.table, &z, k);
            if rejected.iter().zip(&null).any(|(&r, &n)| r && n) {
                counts.any_null += 1;
            }
            for i in 0..pops {
                counts.rejected[i] += rejected[i] as u64;
                if (0..k).any(|j| z[i][j] >= full.bounds[i][j]) {
                    counts.marginal[i] += 1;
                }
            }
        }
        counts
    };
    let empty = Counts {
        any_null: 0,
        rejected: vec![0; pops],
        marginal: vec![0; pops],
    };
    let go = || (0..chunks).into_par_iter().map(work).reduce(|| empty.clone(), Counts::add);
    Ok(match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    })
}

/// Rate of rejecting at least one true null (rows of zero drift).
pub fn estimate_fwer(config: &SimConfig) -> Result<SimResult> {
    let c = run(config)?;
    Ok(SimResult::from_count(c.any_null, config.replications))
}

/// Per-population rejection rates.
pub fn estimate_power(config: &SimConfig) -> Result<Vec<PowerResult>> {
    let c = run(config)?;
    let n = config.replications;
    Ok((0..c.rejected.len())
        .map(|i| PowerResult {
            population: i + 1,
            closed_test: SimResult::from_count(c.rejected[i], n),
            marginal: SimResult::from_count(c.marginal[i], n),
        })
        .collect())
}

/// Runs the update algorithm at every analysis with the given actual
/// information, starting from a planned table.
pub fn finalize_table(
    design: &ClosedTestDesign,
    algorithm: &dyn BoundAlgorithm,
    plan: &IntersectionBoundsTable,
    actual: &[Vec<f64>],
) -> Result<IntersectionBoundsTable> {
    let mut table = plan.clone();
    for j in 0..plan.analyses() {
        let data = AnalysisData {
            analysis: j + 1,
            information: actual.iter().map(|r| r[j]).collect(),
            statistics: Vec::new(),
            skipped: false,
        };
        table = closed_test::update(design, algorithm, &table, &data)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlation_duplicates() {
        let corr = CorrelationMatrix::bivariate(1.0).unwrap();
        let z = sample_statistics(&corr, &[0.0, 0.0], 3).unwrap();
        assert!((z[0] - z[1]).abs() < 1e-12);
    }

    #[test]
    fn drift_shifts_mean() {
        let corr = CorrelationMatrix::identity(2);
        let s = Sampler::new(&corr, &[5.0, -5.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut scratch, mut out) = (vec![0.0; 2], vec![0.0; 2]);
        let mut sum = [0.0; 2];
        for _ in 0..20_000 {
            s.draw(&mut rng, &mut scratch, &mut out);
            sum[0] += out[0];
            sum[1] += out[1];
        }
        assert!((sum[0] / 20_000.0 - 5.0).abs() < 0.03);
        assert!((sum[1] / 20_000.0 + 5.0).abs() < 0.03);
    }
}
