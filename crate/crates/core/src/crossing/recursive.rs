//! Recursive numerical integration over analyses.
//!
//! Score statistics `S_pk = Z_pk * sqrt(n_pk)` of nested populations are sums
//! of independent strata (the smallest population, then each successive
//! complement), and every stratum has independent increments between
//! analyses. The sub-density of the scores on the continuation region is
//! carried from one analysis to the next on composite Gauss-Legendre grids.
//! One population needs a 1-D grid, two need a 2-D grid.

use super::quadrature::{gauss_legendre, Grid};
use super::{ProbabilityBackend, SequentialRect};
use crate::error::Result;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Complement-stratum increments smaller than this (relative) are treated as
/// degenerate and left to the lattice backend.
const DEGENERATE_REL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct RecursiveBackend {
    /// Gauss-Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Panel width in units of the narrowest kernel standard deviation.
    pub panel_width: f64,
    /// Same for one-population problems, whose grids are cheap.
    pub panel_width_single: f64,
    /// Grids start this many standard deviations below the mean.
    pub lower_sd: f64,
}

impl Default for RecursiveBackend {
    fn default() -> Self {
        Self {
            nodes_per_panel: 6,
            panel_width: 2.5,
            panel_width_single: 1.0,
            lower_sd: 8.5,
        }
    }
}

impl ProbabilityBackend for RecursiveBackend {
    fn name(&self) -> &'static str {
        "recursive"
    }

    fn supports(&self, problem: &SequentialRect) -> bool {
        match problem.populations() {
            1 => true,
            2 => {
                let (sub, all) = (&problem.information[0], &problem.information[1]);
                let mut prev = 0.0;
                for k in 0..sub.len() {
                    let comp = all[k] - sub[k];
                    if comp - prev <= DEGENERATE_REL * all[k] {
                        return false;
                    }
                    prev = comp;
                }
                true
            }
            _ => false,
        }
    }

    fn evaluate(&self, problem: &SequentialRect) -> Result<f64> {
        let rule = gauss_legendre(self.nodes_per_panel.max(2));
        Ok(match problem.populations() {
            1 => self.one(problem, &rule),
            _ => self.two(problem, &rule),
        })
    }
}

#[inline]
fn density(x: f64, sd: f64) -> f64 {
    (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt())
}

/// Per-analysis quantities of one stratum-decomposed coordinate.
struct Axis {
    /// Score mean at each analysis.
    mean: Vec<f64>,
    /// Score standard deviation at each analysis.
    sd: Vec<f64>,
    /// Upper limit of the continuation region on the score scale.
    limit: Vec<f64>,
}

impl Axis {
    fn new(info: &[f64], bounds: &[f64], means: &[f64]) -> Self {
        let sd: Vec<f64> = info.iter().map(|n| n.sqrt()).collect();
        Self {
            mean: means.iter().zip(&sd).map(|(m, s)| m * s).collect(),
            limit: bounds.iter().zip(&sd).map(|(b, s)| b * s).collect(),
            sd,
        }
    }

    /// Grid range at analysis `k`, or `None` if the region carries no mass.
    fn range(&self, k: usize, lower_sd: f64) -> Option<(f64, f64)> {
        let lo = self.mean[k] - lower_sd * self.sd[k];
        let hi = self.limit[k].min(self.mean[k] + lower_sd * self.sd[k]);
        (hi > lo).then_some((lo, hi))
    }
}

fn increments(v: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    v.iter()
        .map(|&x| {
            let d = x - prev;
            prev = x;
            d
        })
        .collect()
}

impl RecursiveBackend {
    fn one(&self, p: &SequentialRect, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let axis = Axis::new(&p.information[0], &p.bounds[0], &p.means[0]);
        let inc_sd: Vec<f64> = increments(&p.information[0]).iter().map(|v| v.sqrt()).collect();
        let inc_mean = increments(&axis.mean);
        let k_max = inc_sd.len();

        let mut prev: Option<(Grid, Vec<f64>)> = None;
        for k in 0..k_max {
            let Some((lo, hi)) = axis.range(k, self.lower_sd) else {
                return 0.0;
            };
            let kernel = match inc_sd.get(k + 1) {
                Some(next) => inc_sd[k].min(*next),
                None => inc_sd[k],
            };
            let grid = Grid::composite(lo, hi, self.panel_width_single * kernel, rule);
            let values: Vec<f64> = match &prev {
                None => grid
                    .nodes
                    .iter()
                    .map(|x| density(x - inc_mean[0], inc_sd[0]))
                    .collect(),
                Some((src, g)) => {
                    let weighted: Vec<f64> = g.iter().zip(&src.weights).map(|(g, w)| g * w).collect();
                    grid.nodes
                        .iter()
                        .map(|x| {
                            src.nodes
                                .iter()
                                .zip(&weighted)
                                .map(|(s, gw)| gw * density(x - s - inc_mean[k], inc_sd[k]))
                                .sum()
                        })
                        .collect()
                }
            };
            prev = Some((grid, values));
        }
        let (grid, g) = prev.expect("at least one analysis");
        grid.weights.iter().zip(&g).map(|(w, v)| w * v).sum()
    }

    fn two(&self, p: &SequentialRect, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        // x: subgroup score, y: overall score = x + complement score
        let ax = Axis::new(&p.information[0], &p.bounds[0], &p.means[0]);
        let ay = Axis::new(&p.information[1], &p.bounds[1], &p.means[1]);
        let comp: Vec<f64> = p.information[1]
            .iter()
            .zip(&p.information[0])
            .map(|(a, s)| a - s)
            .collect();
        let sa: Vec<f64> = increments(&p.information[0]).iter().map(|v| v.sqrt()).collect();
        let se: Vec<f64> = increments(&comp).iter().map(|v| v.sqrt()).collect();
        let ma = increments(&ax.mean);
        let my = increments(&ay.mean);
        let me: Vec<f64> = my.iter().zip(&ma).map(|(y, a)| y - a).collect();
        let k_max = sa.len();

        // source grid, its weights folded into the density values
        let mut src: Option<(Grid, Grid, Vec<f64>)> = None;
        for k in 0..k_max {
            let (Some((xlo, xhi)), Some((ylo, yhi))) =
                (ax.range(k, self.lower_sd), ay.range(k, self.lower_sd))
            else {
                return 0.0;
            };
            let mut kernel = sa[k].min(se[k]);
            if k + 1 < k_max {
                kernel = kernel.min(sa[k + 1]).min(se[k + 1]);
            }
            let width = self.panel_width * kernel;
            let gx = Grid::composite(xlo, xhi, width, rule);
            let gy = Grid::composite(ylo, yhi, width, rule);
            let ny = gy.len();

            let values: Vec<f64> = match &src {
                None => {
                    let (ma0, sa0, me0, se0) = (ma[0], sa[0], me[0], se[0]);
                    let ynodes = &gy.nodes;
                    gx.nodes
                        .par_iter()
                        .flat_map_iter(|&x| {
                            let fx = density(x - ma0, sa0);
                            ynodes.iter().map(move |&y| fx * density(y - x - me0, se0))
                        })
                        .collect()
                }
                Some((sx, sy, g)) => {
                    let (sa_k, se_k, ma_k, me_k) = (sa[k], se[k], ma[k], me[k]);
                    let reach = 9.0 * se_k;
                    gx.nodes
                        .par_iter()
                        .flat_map_iter(|&x| {
                            let mut row = vec![0.0; ny];
                            let i0 = sx.nodes.partition_point(|&v| v < x - ma_k - 9.0 * sa_k);
                            let i1 = sx.nodes.partition_point(|&v| v <= x - ma_k + 9.0 * sa_k);
                            for i in i0..i1 {
                                let d = x - sx.nodes[i];
                                let a = density(d - ma_k, sa_k);
                                let gi = &g[i * sy.len()..(i + 1) * sy.len()];
                                for (l, &y) in gy.nodes.iter().enumerate() {
                                    let centre = y - d - me_k;
                                    let j0 = sy.nodes.partition_point(|&v| v < centre - reach);
                                    let j1 = sy.nodes.partition_point(|&v| v <= centre + reach);
                                    let mut acc = 0.0;
                                    for j in j0..j1 {
                                        acc += gi[j] * density(centre - sy.nodes[j], se_k);
                                    }
                                    row[l] += a * acc;
                                }
                            }
                            row.into_iter()
                        })
                        .collect()
                }
            };
            // fold quadrature weights in for the next step / final sum
            let mut weighted = values;
            for (i, wx) in gx.weights.iter().enumerate() {
                for (j, wy) in gy.weights.iter().enumerate() {
                    weighted[i * ny + j] *= wx * wy;
                }
            }
            src = Some((gx, gy, weighted));
        }
        let (_, _, g) = src.expect("at least one analysis");
        g.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::normal_cdf;

    #[test]
    fn single_look_is_normal_cdf() {
        let b = RecursiveBackend::default();
        let p = SequentialRect::single(&[50.0], &[1.7]);
        assert!((b.non_crossing(&p).unwrap() - normal_cdf(1.7)).abs() < 1e-12);
        let p = p.with_means(vec![vec![0.4]]);
        assert!((b.non_crossing(&p).unwrap() - normal_cdf(1.3)).abs() < 1e-12);
    }

    #[test]
    fn independent_strata_factorize_at_one_look() {
        // subgroup with half the information: overall = (x + e), check by
        // comparing against the bivariate normal with rho = sqrt(1/2)
        let b = RecursiveBackend::default();
        let p = SequentialRect::new(vec![vec![50.0], vec![100.0]], vec![vec![f64::INFINITY], vec![1.2]]);
        assert!((b.non_crossing(&p).unwrap() - normal_cdf(1.2)).abs() < 1e-10);
    }

    #[test]
    fn degenerate_complement_is_unsupported() {
        let p = SequentialRect::new(vec![vec![50.0, 80.0], vec![60.0, 90.0]], vec![vec![2.0; 2]; 2]);
        assert!(!RecursiveBackend::default().supports(&p.compressed().unwrap()));
    }
}
