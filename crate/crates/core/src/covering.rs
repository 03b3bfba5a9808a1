//! Image iteration restricted to whole partition cells, the weak covering
//! check built on it, and the large-image check for `T_a^m`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::MapFamily;
use crate::interval::IntervalUnion;
use crate::map_model::PiecewiseMap;

/// Slack when testing whether a partition cell lies inside a set.
pub const CELL_SLACK: f64 = 1e-12;
/// The uncovered remainder must be shorter than this in total.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Each uncovered piece must be shorter than this.
pub const RESIDUAL_PIECE_TOL: f64 = 1e-6;
pub const DEFAULT_N_MAX: usize = 64;

/// `T̃(U)`: union of `T(ω')` over branch cells `ω' ⊂ U`.
pub fn tilde_image(t: &PiecewiseMap, u: &IntervalUnion) -> IntervalUnion {
    let pieces = t
        .branches()
        .iter()
        .filter(|b| u.contains_interval(b.left, b.right, CELL_SLACK))
        .map(|b| b.image())
        .collect();
    IntervalUnion::from_pieces(pieces)
}

/// Ordinary image `T(U)` from monotone endpoint evaluation.
pub fn forward_image(t: &PiecewiseMap, u: &IntervalUnion) -> IntervalUnion {
    let mut pieces = Vec::new();
    for &(lo, hi) in u.pieces() {
        for b in t.branches() {
            let (l, r) = (lo.max(b.left), hi.min(b.right));
            if r > l {
                let (y0, y1) = (b.eval(l).clamp(-1.0, 1.0), b.eval(r).clamp(-1.0, 1.0));
                pieces.push((y0.min(y1), y0.max(y1)));
            }
        }
    }
    IntervalUnion::from_pieces(pieces)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveringRow {
    pub cell: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub residual_length: f64,
}

/// Smallest `N ≤ n_max` with `⋃_{n ≤ N} T̃ⁿ(ω)` covering `[-1, 1]` up to a
/// negligible remainder, for the branch cell `ω` with index `cell`.
pub fn weakly_covering_n(t: &PiecewiseMap, cell: usize, n_max: usize) -> Result<CoveringRow> {
    let b = t
        .branches()
        .get(cell)
        .ok_or_else(|| Error::Precondition(format!("no branch cell {cell}")))?;
    let p = t.branch_count();
    let mut current = IntervalUnion::single(b.left, b.right);
    let mut acc = current.clone();
    let mut residual = f64::NAN;
    for n in 0..=n_max {
        let rest = acc.complement();
        residual = rest.measure();
        let small_pieces = rest.pieces().iter().all(|g| g.1 - g.0 < RESIDUAL_PIECE_TOL);
        if residual < RESIDUAL_TOL && rest.len() <= p * (n + 1) && small_pieces {
            return Ok(CoveringRow {
                cell,
                n,
                residual_length: residual,
            });
        }
        let next = tilde_image(t, &current);
        let grown = acc.union(&next);
        if next == current && grown == acc {
            break;
        }
        current = next;
        acc = grown;
    }
    Err(Error::NotCoveringWithin {
        cell,
        n_max,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakCoveringReport {
    pub check: &'static str,
    pub cells: Vec<CoveringRow>,
    pub max_n: usize,
}

/// Run [`weakly_covering_n`] on every branch cell.
pub fn check_weak_covering(t: &PiecewiseMap, n_max: usize) -> Result<WeakCoveringReport> {
    let cells = (0..t.branch_count())
        .map(|k| weakly_covering_n(t, k, n_max))
        .collect::<Result<Vec<_>>>()?;
    let max_n = cells.iter().map(|c| c.n).max().unwrap_or(0);
    Ok(WeakCoveringReport {
        check: "weak covering",
        cells,
        max_n,
    })
}

/// Large-image result for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeImageRow {
    pub a: f64,
    pub cells: usize,
    /// `min over cells of min(-lo, hi)` for the image `(lo, hi)` of `T_a^m`.
    pub admissible_delta: f64,
    /// `inf |(T_a^m)'|` from per-cell derivative products.
    pub inf_derivative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeImageReport {
    pub check: &'static str,
    pub m: usize,
    pub delta: f64,
    pub grid: usize,
    /// `1 + 1/δ`: `inf |(T_a^m)'|` must exceed this.
    pub required_inf_derivative: f64,
    pub observed_inf_derivative: f64,
    /// `min admissible δ − δ`; negative when some image misses `(-δ, δ)`.
    pub image_margin: f64,
    /// `δ − 1/(inf |(T_a^m)'| − 1)`; must be positive.
    pub derivative_margin: f64,
    /// Same inequality restated as `inf |(T_a^m)'| − (1 + 1/δ)`.
    pub margin: f64,
    pub pass: bool,
    pub rows: Vec<LargeImageRow>,
    pub failures: Vec<String>,
}

const DERIV_SAMPLES_PER_CELL: usize = 4;

/// Per-parameter data for the large-image check at depth `m`.
pub fn large_image_row(t: &PiecewiseMap, a: f64, m: usize) -> Result<LargeImageRow> {
    let part = t.refine_partition(m)?;
    let (adm, inf_d) = part
        .cells
        .par_iter()
        .map(|c| {
            let (lo, hi) = t.word_image(c.left, c.right, &c.word);
            ((-lo).min(hi), t.word_min_derivative(c, DERIV_SAMPLES_PER_CELL))
        })
        .reduce(
            || (f64::INFINITY, f64::INFINITY),
            |x, y| (x.0.min(y.0), x.1.min(y.1)),
        );
    Ok(LargeImageRow {
        a,
        cells: part.len(),
        admissible_delta: adm,
        inf_derivative: inf_d,
    })
}

/// Check `(-δ, δ) ⊂ T_a^m(ω)` for every `ω ∈ 𝒫_m(a)` and
/// `δ > 1/(inf |(T_a^m)'| − 1)` at each grid parameter. With `delta = None`
/// the largest admissible `δ` (capped just below 1) is used.
pub fn check_large_image(
    family: &MapFamily,
    m: usize,
    delta: Option<f64>,
    grid: &[f64],
) -> Result<LargeImageReport> {
    if m == 0 {
        return Err(Error::Precondition("large-image depth must be positive".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &a in grid {
        let t = family.instantiate(a)?;
        rows.push(large_image_row(&t, a, m)?);
    }
    Ok(summarize_large_image(m, delta, rows))
}

pub(crate) fn summarize_large_image(m: usize, delta: Option<f64>, rows: Vec<LargeImageRow>) -> LargeImageReport {
    let adm = rows.iter().map(|r| r.admissible_delta).fold(f64::INFINITY, f64::min);
    let inf_d = rows.iter().map(|r| r.inf_derivative).fold(f64::INFINITY, f64::min);
    let delta = delta.unwrap_or_else(|| adm.min(1.0 - 1e-9));
    let required = 1.0 + 1.0 / delta;
    let image_margin = adm - delta;
    let derivative_margin = if inf_d > 1.0 {
        delta - 1.0 / (inf_d - 1.0)
    } else {
        f64::NEG_INFINITY
    };
    let mut failures = Vec::new();
    if !(delta > 0.0 && delta < 1.0) {
        failures.push(format!("delta = {delta} is not in (0, 1)"));
    }
    for r in &rows {
        if r.admissible_delta < delta - CELL_SLACK {
            failures.push(format!(
                "a = {}: some image of T^{m} only contains (-{d}, {d})",
                r.a,
                d = r.admissible_delta
            ));
        }
    }
    if !(derivative_margin > 0.0) {
        failures.push(format!(
            "inf |(T^{m})'| = {inf_d} does not exceed 1 + 1/delta = {required}"
        ));
    }
    LargeImageReport {
        check: "large image",
        m,
        delta,
        grid: rows.len(),
        required_inf_derivative: required,
        observed_inf_derivative: inf_d,
        image_margin,
        derivative_margin,
        margin: inf_d - required,
        pass: failures.is_empty(),
        rows,
        failures,
    }
}

/// Smallest `m ≤ m_max` for which the large-image check passes; returns the
/// last report when none does.
pub fn search_large_image(
    family: &MapFamily,
    m_max: usize,
    delta: Option<f64>,
    grid: &[f64],
) -> Result<LargeImageReport> {
    let mut last = None;
    for m in 1..=m_max.max(1) {
        let r = check_large_image(family, m, delta, grid)?;
        if r.pass {
            return Ok(r);
        }
        last = Some(r);
    }
    Ok(last.expect("at least one depth is tried"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn map(bps: &[f64], exprs: &[&str]) -> PiecewiseMap {
        PiecewiseMap::new(
            bps.to_vec(),
            exprs.iter().map(|e| parse(e).unwrap()).collect(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn tilde_image_basics() {
        let d = map(&[-1.0, 0.0, 1.0], &["2*x + 1", "2*x - 1"]);
        assert_eq!(tilde_image(&d, &IntervalUnion::single(-1.0, 0.0)), IntervalUnion::full());
        assert!(tilde_image(&d, &IntervalUnion::single(-0.5, 0.5)).is_empty());
        assert!(tilde_image(&d, &IntervalUnion::empty()).is_empty());
    }

    #[test]
    fn doubling_covers_in_one_step() {
        let d = map(&[-1.0, 0.0, 1.0], &["2*x + 1", "2*x - 1"]);
        let r = check_weak_covering(&d, DEFAULT_N_MAX).unwrap();
        assert_eq!(r.max_n, 1);
        assert!(r.cells.iter().all(|c| c.n == 1));
    }

    #[test]
    fn invariant_half_does_not_cover() {
        let t = map(
            &[-1.0, -0.5, 0.0, 0.5, 1.0],
            &["4*x + 3", "4*x + 1", "2*x", "2*x - 1"],
        );
        assert!(matches!(
            weakly_covering_n(&t, 2, DEFAULT_N_MAX),
            Err(Error::NotCoveringWithin { cell: 2, .. })
        ));
        assert_eq!(weakly_covering_n(&t, 0, DEFAULT_N_MAX).unwrap().n, 1);
    }
}
