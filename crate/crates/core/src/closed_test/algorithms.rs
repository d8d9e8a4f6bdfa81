//! The three bound-derivation strategies for one intersection hypothesis.

use super::{SubsetBounds, SubsetContext};
use crate::error::{Error, Result};
use crate::gs_single::solve_bounds;
use crate::roots::{solve_monotone, RootTol};
use std::fmt;

const LEVEL_TOL: RootTol = RootTol {
    value: 1e-9,
    x: 1e-13,
    max_iter: 80,
};

/// Highest spending level any single hypothesis may be given.
const MAX_MEMBER_LEVEL: f64 = 0.5;

/// Strategy deriving `c_ij(J)` for one intersection hypothesis.
pub trait BoundAlgorithm: Send + Sync + fmt::Debug {
    /// Registry name.
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    /// Bounds at design time from planned information.
    fn plan(&self, ctx: &SubsetContext) -> Result<SubsetBounds>;

    /// Bounds after observing the information of analysis `k` (0-based),
    /// given the bounds in force before it. Bounds of analyses `< k` are kept.
    fn update(&self, ctx: &SubsetContext, prior: &SubsetBounds, k: usize) -> Result<SubsetBounds>;
}

/// Re-plans the current and all future analyses with a common inflation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CurrentAndFuture;

/// Re-solves the current analysis only; future bounds stay as planned.
#[derive(Clone, Copy, Debug, Default)]
pub struct CurrentOnly;

/// Other members spend their unadjusted share; the largest population in the
/// intersection absorbs all of the correlation slack.
#[derive(Clone, Copy, Debug, Default)]
pub struct LargestPopulation;

impl BoundAlgorithm for CurrentAndFuture {
    fn name(&self) -> &'static str {
        "1"
    }

    fn description(&self) -> &'static str {
        "adjust current and future bounds at each analysis"
    }

    fn plan(&self, ctx: &SubsetContext) -> Result<SubsetBounds> {
        resolve_from(ctx, None, 0, Inflate::All)
    }

    fn update(&self, ctx: &SubsetContext, prior: &SubsetBounds, k: usize) -> Result<SubsetBounds> {
        resolve_from(ctx, Some(prior), k, Inflate::All)
    }
}

impl BoundAlgorithm for CurrentOnly {
    fn name(&self) -> &'static str {
        "2"
    }

    fn description(&self) -> &'static str {
        "adjust current bounds at each analysis"
    }

    fn plan(&self, ctx: &SubsetContext) -> Result<SubsetBounds> {
        resolve_from(ctx, None, 0, Inflate::All)
    }

    fn update(&self, ctx: &SubsetContext, prior: &SubsetBounds, k: usize) -> Result<SubsetBounds> {
        let k_max = ctx.analyses();
        let active = ctx.active();
        let mut out = prior.clone();
        if active.is_empty() {
            return Ok(out);
        }
        let current = |alpha_star: f64| -> Result<Vec<Vec<f64>>> {
            let mut bounds = prior.bounds.clone();
            for &m in &active {
                let level = ctx.weights[m] * alpha_star;
                let info = &ctx.information[m][..=k];
                let target = ctx.spending[m].spend(ctx.fraction(m, k), level);
                let solved = solve_bounds(ctx.backend.as_ref(), info, &prior.bounds[m][..k], &[target], true)?;
                bounds[m][k] = solved[k];
            }
            Ok(bounds)
        };
        let alpha_star = if active.len() == 1 && k + 1 == k_max {
            ctx.alpha
        } else {
            let lo = ctx.alpha;
            let hi = ctx.alpha / max_weight(ctx, &active);
            solve_inflation(ctx, lo, hi, |a| {
                let b = current(a)?;
                Ok((ctx.union_crossing(&b)?, b))
            })?
        };
        out.bounds = current(alpha_star)?;
        // future bounds keep the inflation they were planned with
        out.alpha_star[k] = alpha_star;
        Ok(out)
    }
}

impl BoundAlgorithm for LargestPopulation {
    fn name(&self) -> &'static str {
        "3"
    }

    fn description(&self) -> &'static str {
        "allocate excess alpha to the largest population only"
    }

    fn plan(&self, ctx: &SubsetContext) -> Result<SubsetBounds> {
        resolve_from(ctx, None, 0, Inflate::Largest)
    }

    fn update(&self, ctx: &SubsetContext, prior: &SubsetBounds, k: usize) -> Result<SubsetBounds> {
        resolve_from(ctx, Some(prior), k, Inflate::Largest)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Inflate {
    All,
    Largest,
}

fn max_weight(ctx: &SubsetContext, active: &[usize]) -> f64 {
    active.iter().map(|&m| ctx.weights[m]).fold(0.0, f64::max)
}

/// Bounds of analyses `k..` for member `m` spending at `level`, with the
/// earlier ones taken from `prior`.
fn member_bounds(ctx: &SubsetContext, m: usize, prior: Option<&SubsetBounds>, k: usize, level: f64) -> Result<Vec<f64>> {
    let k_max = ctx.analyses();
    let fixed: &[f64] = prior.map_or(&[], |p| &p.bounds[m][..k]);
    if level <= 0.0 {
        let mut b = fixed.to_vec();
        b.resize(k_max, f64::INFINITY);
        return Ok(b);
    }
    let targets: Vec<f64> = (k..k_max)
        .map(|j| ctx.spending[m].spend(ctx.fraction(m, j), level))
        .collect();
    solve_bounds(ctx.backend.as_ref(), &ctx.information[m], fixed, &targets, true)
}

/// Re-plans analyses `k..` of every member. With `Inflate::All` each active
/// member spends `w_i * alpha_star`; with `Inflate::Largest` only the largest
/// active member does and the others spend `w_i * alpha`.
fn resolve_from(ctx: &SubsetContext, prior: Option<&SubsetBounds>, k: usize, mode: Inflate) -> Result<SubsetBounds> {
    let members = ctx.member_labels.len();
    let active = ctx.active();
    let largest = active.last().copied();
    let inflated = |m: usize| mode == Inflate::All || Some(m) == largest;

    let build = |alpha_star: f64| -> Result<Vec<Vec<f64>>> {
        (0..members)
            .map(|m| {
                let a = if inflated(m) { alpha_star } else { ctx.alpha };
                member_bounds(ctx, m, prior, k, ctx.weights[m] * a)
            })
            .collect()
    };

    let alpha_star = if active.len() <= 1 {
        ctx.alpha
    } else {
        let lo = ctx.alpha;
        let hi = match mode {
            Inflate::All => ctx.alpha / max_weight(ctx, &active),
            Inflate::Largest => {
                let l = largest.expect("nonempty");
                ctx.level / ctx.weights[l]
            }
        };
        solve_inflation(ctx, lo, hi, |a| {
            let b = build(a)?;
            Ok((ctx.union_crossing(&b)?, b))
        })?
    };

    let bounds = build(alpha_star)?;
    let mut history = prior.map_or_else(|| vec![alpha_star; ctx.analyses()], |p| p.alpha_star.clone());
    for a in &mut history[k..] {
        *a = alpha_star;
    }
    Ok(SubsetBounds {
        mask: ctx.mask,
        members: ctx.member_labels.clone(),
        weights: ctx.weights.clone(),
        level: ctx.level,
        bounds,
        alpha_star: history,
    })
}

/// Finds `alpha_star` at which the union crossing probability equals the
/// subset level. The bracket `[lo, hi]` is widened when it does not straddle
/// the level, as can happen once earlier bounds are frozen.
fn solve_inflation<F>(ctx: &SubsetContext, mut lo: f64, mut hi: f64, mut eval: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let target = ctx.level;
    let max_star = MAX_MEMBER_LEVEL / max_weight(ctx, &ctx.active());
    let mut f_lo = eval(lo)?.0;
    let mut tries = 0;
    while f_lo > target && tries < 40 {
        hi = lo;
        lo *= 0.5;
        f_lo = eval(lo)?.0;
        tries += 1;
    }
    let mut f_hi = eval(hi)?.0;
    while f_hi < target && hi < max_star {
        lo = hi;
        f_lo = f_hi;
        hi = (hi * 1.5).min(max_star);
        f_hi = eval(hi)?.0;
    }
    if f_lo > target || f_hi < target {
        return Err(Error::Numerical(format!(
            "subset {:?}: level {target:.6} not bracketed, crossing {f_lo:.6} at alpha* = {lo:.6}, {f_hi:.6} at {hi:.6}",
            ctx.member_labels
        )));
    }
    solve_monotone(|a| Ok(eval(a)?.0), lo, hi, f_lo, f_hi, target, LEVEL_TOL)
}
