//! The expansion operator `E_s`, which stretches each branch graph about the
//! boundary it touches, and the constants that make a perturbed family
//! `a ↦ E_{1+(a-a0)α} T_a` have nested symbolic dynamics.

use std::sync::Arc;

use serde::Serialize;

use crate::covering::check_large_image;
use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::family::{scale_schedule, MapFamily};
use crate::map_model::{Branch, MapBounds, PiecewiseMap};

/// Image endpoints this close to `±1` count as touching.
pub const CASE_TOL: f64 = 1e-10;
/// Upper limit reported for `s₀` when no branch constrains it.
pub const SCALE_CEILING: f64 = 2.0;

/// Which rescaling applies, decided by the closure of the branch image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionCase {
    /// Image closure inside `(-1, 1)`: `s·f`.
    Interior,
    /// Image is `(-1, 1)`: unchanged.
    Full,
    /// `-1` in the closure: `(s+1)/2·f + (s-1)/2`.
    TouchesMinusOne,
    /// `+1` in the closure: `(s+1)/2·f − (s-1)/2`.
    TouchesPlusOne,
}

impl ExpansionCase {
    pub fn classify(image: (f64, f64)) -> Self {
        let low = image.0 <= -1.0 + CASE_TOL;
        let high = image.1 >= 1.0 - CASE_TOL;
        match (low, high) {
            (true, true) => ExpansionCase::Full,
            (true, false) => ExpansionCase::TouchesMinusOne,
            (false, true) => ExpansionCase::TouchesPlusOne,
            (false, false) => ExpansionCase::Interior,
        }
    }

    /// `(scale, offset)` with `E_s f = scale·f + offset`.
    pub fn coefficients(self, s: f64) -> (f64, f64) {
        match self {
            ExpansionCase::Interior => (s, 0.0),
            ExpansionCase::Full => (1.0, 0.0),
            ExpansionCase::TouchesMinusOne => ((s + 1.0) / 2.0, (s - 1.0) / 2.0),
            ExpansionCase::TouchesPlusOne => ((s + 1.0) / 2.0, -(s - 1.0) / 2.0),
        }
    }

    /// Expression for `E_s f` with a numeric scale.
    pub fn apply(self, f: &Arc<Expr>, s: f64) -> Arc<Expr> {
        let (scale, offset) = self.coefficients(s);
        expr::affine(scale, f.clone(), offset)
    }

    /// Expression for `E_s f` where `s` is itself an expression in `a`.
    pub fn apply_expr(self, f: &Arc<Expr>, s: &Arc<Expr>) -> Arc<Expr> {
        let half = |e: Arc<Expr>| expr::mul(Expr::num(0.5), e);
        let one = || Expr::num(1.0);
        match self {
            ExpansionCase::Interior => expr::mul(s.clone(), f.clone()),
            ExpansionCase::Full => f.clone(),
            ExpansionCase::TouchesMinusOne => expr::add(
                expr::mul(half(expr::add(s.clone(), one())), f.clone()),
                half(expr::sub(s.clone(), one())),
            ),
            ExpansionCase::TouchesPlusOne => expr::sub(
                expr::mul(half(expr::add(s.clone(), one())), f.clone()),
                half(expr::sub(s.clone(), one())),
            ),
        }
    }

    /// Largest `s` keeping the rescaled image `image` inside `[-1, 1]`.
    pub fn max_scale(self, image: (f64, f64)) -> f64 {
        let (lo, hi) = image;
        let s = match self {
            ExpansionCase::Full => f64::INFINITY,
            ExpansionCase::Interior => {
                let up = if hi > 0.0 { 1.0 / hi } else { f64::INFINITY };
                let down = if lo < 0.0 { -1.0 / lo } else { f64::INFINITY };
                up.min(down)
            }
            ExpansionCase::TouchesMinusOne => (3.0 - hi) / (1.0 + hi),
            ExpansionCase::TouchesPlusOne => (3.0 + lo) / (1.0 - lo),
        };
        s.min(SCALE_CEILING)
    }
}

/// A branch after `E_s`, with its case tag and the source branch.
#[derive(Debug, Clone)]
pub struct ExpandedBranch {
    pub source: Branch,
    pub case: ExpansionCase,
    pub s: f64,
    pub branch: Branch,
    pub bounds: MapBounds,
}

/// `E_s T` with per-branch case tags.
#[derive(Debug, Clone)]
pub struct ExpandedMap {
    pub s: f64,
    pub map: PiecewiseMap,
    pub cases: Vec<ExpansionCase>,
}

/// `s₀` for a single branch.
pub fn branch_max_scale(br: &Branch) -> f64 {
    let image = br.image();
    ExpansionCase::classify(image).max_scale(image)
}

fn expand_indexed(br: &Branch, s: f64, index: usize) -> Result<ExpandedBranch> {
    if !(s >= 1.0) {
        return Err(Error::Precondition(format!("expansion scale {s} is below 1")));
    }
    let case = ExpansionCase::classify(br.image());
    let max = case.max_scale(br.image());
    let (scale, offset) = case.coefficients(s);
    let (lo, hi) = br.image();
    let (y0, y1) = (scale * lo + offset, scale * hi + offset);
    if y0 < -1.0 - 1e-12 || y1 > 1.0 + 1e-12 {
        return Err(Error::ScaleTooLarge {
            s,
            branch: index,
            max_scale: max,
        });
    }
    let (branch, bounds) = Branch::new(br.left, br.right, case.apply(&br.expr, s), br.param)?;
    Ok(ExpandedBranch {
        source: br.clone(),
        case,
        s,
        branch,
        bounds,
    })
}

/// `E_s` on one branch.
pub fn expand_branch(br: &Branch, s: f64) -> Result<ExpandedBranch> {
    expand_indexed(br, s, 0)
}

/// `E_s T`: branchwise expansion with breakpoints unchanged.
pub fn expand_map(t: &PiecewiseMap, s: f64) -> Result<ExpandedMap> {
    let mut branches = Vec::with_capacity(t.branch_count());
    let mut cases = Vec::with_capacity(t.branch_count());
    let mut bounds = MapBounds {
        lambda: f64::INFINITY,
        big_lambda: 0.0,
        lipschitz: 0.0,
    };
    for (k, br) in t.branches().iter().enumerate() {
        let e = expand_indexed(br, s, k)?;
        bounds.lambda = bounds.lambda.min(e.bounds.lambda);
        bounds.big_lambda = bounds.big_lambda.max(e.bounds.big_lambda);
        bounds.lipschitz = bounds.lipschitz.max(e.bounds.lipschitz);
        cases.push(e.case);
        branches.push(e.branch);
    }
    Ok(ExpandedMap {
        s,
        map: PiecewiseMap::from_branches(branches, bounds),
        cases,
    })
}

/// `s₀(T)`: the smallest branch bound, at most [`SCALE_CEILING`].
pub fn max_scale(t: &PiecewiseMap) -> f64 {
    t.branches()
        .iter()
        .map(branch_max_scale)
        .fold(SCALE_CEILING, f64::min)
}

/// Inputs and the threshold `α₀` for the nested-dynamics perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationConstants {
    pub lambda: f64,
    pub big_lambda: f64,
    pub eta: f64,
    pub zeta: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// `2(λη/(λ-1) + Λζ) / (δ − 1/(λ-1))`
    pub alpha0: f64,
}

impl PerturbationConstants {
    /// `K(α) = (α + (1 + αε)η) / (λ - 1)`
    pub fn k(&self, alpha: f64) -> f64 {
        (alpha + (1.0 + alpha * self.epsilon) * self.eta) / (self.lambda - 1.0)
    }

    /// `ε_max = min{1, s₀ − 1} / α`
    pub fn window(&self, alpha: f64, s0: f64) -> f64 {
        (s0 - 1.0).min(1.0) / alpha
    }
}

/// `α₀` from `α(δ − 1/(λ-1)) > (1 + αε)(λη/(λ-1) + Λζ)` with `1 + αε ≤ 2`.
pub fn compute_constants(
    lambda: f64,
    big_lambda: f64,
    eta: f64,
    zeta: f64,
    delta: f64,
    epsilon: f64,
) -> Result<PerturbationConstants> {
    if !(lambda > 1.0) {
        return Err(Error::Infeasible(format!("lambda = {lambda} is not above 1")));
    }
    let threshold = 1.0 / (lambda - 1.0);
    if !(delta > threshold) {
        return Err(Error::Infeasible(format!(
            "delta = {delta} does not exceed 1/(lambda - 1) = {threshold}"
        )));
    }
    let alpha0 = 2.0 * (lambda * eta / (lambda - 1.0) + big_lambda * zeta) / (delta - threshold);
    Ok(PerturbationConstants {
        lambda,
        big_lambda,
        eta,
        zeta,
        delta,
        epsilon,
        alpha0,
    })
}

/// Everything fixed when building `a ↦ E_{1+(a-a0)α} T_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationPlan {
    pub constants: PerturbationConstants,
    pub a0: f64,
    pub alpha: f64,
    pub s0: f64,
    pub epsilon_max: f64,
    pub k: f64,
}

impl PerturbationPlan {
    pub fn scale_at(&self, a: f64) -> f64 {
        1.0 + (a - self.a0) * self.alpha
    }
}

#[derive(Debug, Clone)]
pub struct PerturbedFamily {
    pub family: MapFamily,
    pub plan: PerturbationPlan,
    pub cases: Vec<ExpansionCase>,
}

/// Constants of `F` on `[a0, a0 + span]`: `δ` is the largest value with
/// `(-δ, δ)` inside every branch image.
pub fn family_constants(family: &MapFamily) -> Result<PerturbationConstants> {
    let b = family.bounds();
    let li = check_large_image(family, 1, None, &family.verify_grid())?;
    let delta = li.rows.iter().map(|r| r.admissible_delta).fold(1.0 - 1e-9, f64::min);
    compute_constants(b.lambda, b.big_lambda, b.eta, b.zeta, delta, 0.0)
}

/// `a ↦ E_{s(a)} T_a` with `s(a) = 1 + (a - a0)α` on `[a0, a0 + ε_max]`.
pub fn perturbed_family(family: &MapFamily, a0: f64, alpha: f64) -> Result<PerturbedFamily> {
    let mut constants = family_constants(family)?;
    if !(alpha >= constants.alpha0) || !(alpha > 0.0) {
        return Err(Error::Infeasible(format!(
            "alpha = {alpha} is below alpha0 = {}",
            constants.alpha0
        )));
    }
    let grid = family.verify_grid();
    let mut s0 = SCALE_CEILING;
    for &a in &grid {
        s0 = s0.min(max_scale(&family.instantiate(a)?));
    }
    let epsilon_max = constants.window(alpha, s0);
    constants.epsilon = epsilon_max;
    let (_, hi) = family.interval();
    let a1 = (a0 + epsilon_max).min(hi);
    if !(a1 > a0) {
        return Err(Error::Infeasible(format!(
            "empty perturbation window starting at a0 = {a0}"
        )));
    }
    // case tags must not change across the window
    let first = family.instantiate(a0)?;
    let cases: Vec<ExpansionCase> = first
        .branches()
        .iter()
        .map(|b| ExpansionCase::classify(b.image()))
        .collect();
    let window = family.restrict(a0, a1)?;
    for a in window.verify_grid() {
        let t = family.instantiate(a)?;
        for (k, b) in t.branches().iter().enumerate() {
            if ExpansionCase::classify(b.image()) != cases[k] {
                return Err(Error::CaseUnstable { branch: k, a0, a1: a });
            }
        }
    }
    let s = scale_schedule(a0, alpha);
    let branches = family
        .branch_exprs()
        .iter()
        .zip(&cases)
        .map(|(f, c)| c.apply_expr(f, &s))
        .collect();
    let perturbed = family.with_branches(branches, (a0, a1))?;
    Ok(PerturbedFamily {
        family: perturbed,
        plan: PerturbationPlan {
            constants,
            a0,
            alpha,
            s0,
            epsilon_max,
            k: constants.k(alpha),
        },
        cases,
    })
}
