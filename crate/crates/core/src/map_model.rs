//! A single piecewise expanding map of `[-1, 1]` and its dynamical partitions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::roots::bracketed_root;

/// Points closer than this to a breakpoint are treated as hitting it.
pub const BREAKPOINT_TOL: f64 = 1e-12;

/// Interior sample points per branch for the derivative audit.
pub const AUDIT_POINTS: usize = 1024;

/// Refinement is refused when `j * log2(Λ)` exceeds this.
pub const CELL_GUARD_LOG2: f64 = 60.0;

/// Hard cap on materialized cells, independent of the logarithmic guard.
pub const MAX_MATERIALIZED_CELLS: usize = 1 << 26;

/// Branch images may overshoot `[-1, 1]` by this much before being rejected.
const IMAGE_SLACK: f64 = 1e-9;

/// Image-side overlaps thinner than this are snapped away during refinement.
const SLIVER: f64 = 1e-12;

/// A monotone branch `x ↦ f(x, a)` on the open cell `(left, right)`.
#[derive(Debug, Clone)]
pub struct Branch {
    pub left: f64,
    pub right: f64,
    pub expr: Arc<Expr>,
    pub param: f64,
    pub increasing: bool,
    /// Closure of the image, sorted and clipped to `[-1, 1]`.
    image: (f64, f64),
}

/// Derivative audit of a branch or map on the verification grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapBounds {
    /// `inf |T'|`
    pub lambda: f64,
    /// `sup |T'|`
    pub big_lambda: f64,
    /// `sup |T''|`, the Lipschitz constant of `T'` on each cell.
    pub lipschitz: f64,
}

impl Branch {
    /// Build a branch and audit monotonicity on the sampling grid.
    pub fn new(left: f64, right: f64, expr: Arc<Expr>, param: f64) -> Result<(Self, MapBounds)> {
        if !(left < right) {
            return Err(Error::InvalidMap(format!("empty cell ({left}, {right})")));
        }
        let mut min_d = f64::INFINITY;
        let mut max_d: f64 = 0.0;
        let mut max_d2: f64 = 0.0;
        let mut sign = 0.0;
        for k in 0..=AUDIT_POINTS + 1 {
            let x = left + (right - left) * k as f64 / (AUDIT_POINTS + 1) as f64;
            let jet = expr.eval_d2(x, param, Var::X);
            if !jet.value.is_finite() || !jet.d1.is_finite() {
                return Err(Error::InvalidMap(format!("branch not finite at x = {x}")));
            }
            if jet.d1 == 0.0 || (sign != 0.0 && jet.d1.signum() != sign) {
                return Err(Error::InvalidMap(format!(
                    "branch on ({left}, {right}) is not strictly monotone near x = {x}"
                )));
            }
            sign = jet.d1.signum();
            min_d = min_d.min(jet.d1.abs());
            max_d = max_d.max(jet.d1.abs());
            if jet.d2.is_finite() {
                max_d2 = max_d2.max(jet.d2.abs());
            }
        }
        let (v_left, v_right) = (expr.eval(left, param), expr.eval(right, param));
        let (lo, hi) = (v_left.min(v_right), v_left.max(v_right));
        if lo < -1.0 - IMAGE_SLACK || hi > 1.0 + IMAGE_SLACK {
            return Err(Error::InvalidMap(format!(
                "branch on ({left}, {right}) has image [{lo}, {hi}] outside [-1, 1]"
            )));
        }
        let branch = Branch {
            left,
            right,
            expr,
            param,
            increasing: sign > 0.0,
            image: (lo.max(-1.0), hi.min(1.0)),
        };
        Ok((
            branch,
            MapBounds {
                lambda: min_d,
                big_lambda: max_d,
                lipschitz: max_d2,
            },
        ))
    }

    /// Value of the (closure-extended) branch function.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.expr.eval(x, self.param)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        self.expr.eval_d(x, self.param, Var::X).1
    }

    /// `∂_a f(x, a)` at the branch parameter.
    pub fn param_deriv(&self, x: f64) -> f64 {
        self.expr.eval_d(x, self.param, Var::A).1
    }

    /// Closure of the branch image, `(lo, hi)`.
    #[inline]
    pub fn image(&self) -> (f64, f64) {
        self.image
    }

    pub fn len(&self) -> f64 {
        self.right - self.left
    }

    /// Monotone inverse: the `x` in the closed cell with `f(x) = y`.
    pub fn invert(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.image;
        if y < lo - SLIVER || y > hi + SLIVER {
            return Err(Error::RootSolveFailure {
                left: self.left,
                right: self.right,
                target: y,
                reason: "target outside branch image",
            });
        }
        // endpoints are returned exactly so adjacent cells share edges
        let (at_lo, at_hi) = if self.increasing {
            (self.left, self.right)
        } else {
            (self.right, self.left)
        };
        if y <= lo {
            return Ok(at_lo);
        }
        if y >= hi {
            return Ok(at_hi);
        }
        bracketed_root(
            |x| self.eval(x) - y,
            |x| self.deriv(x),
            self.left,
            self.right,
            2,
        )
        .ok_or(Error::RootSolveFailure {
            left: self.left,
            right: self.right,
            target: y,
            reason: "no sign change; branch data not monotone",
        })
    }
}

/// A length-`j` itinerary over the alphabet of branch indices.
///
/// Symbols are stored 0-based and displayed 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(pub Vec<u16>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k.min(self.0.len())].to_vec())
    }

    /// Parse a space-separated 1-based word such as `"1 1 2"`.
    pub fn parse(s: &str) -> Option<Word> {
        s.split_whitespace()
            .map(|t| t.parse::<u16>().ok().filter(|v| *v >= 1).map(|v| v - 1))
            .collect::<Option<Vec<_>>>()
            .map(Word)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", s + 1)?;
        }
        Ok(())
    }
}

/// One cell `(left, right)` of `𝒫_j` with its itinerary.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub left: f64,
    pub right: f64,
    pub word: Word,
}

impl Cell {
    pub fn len(&self) -> f64 {
        self.right - self.left
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }
}

/// Ordered cells of `𝒫_j = 𝒫(T^j)`; consecutive cells share endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub depth: usize,
    pub cells: Vec<Cell>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell edges `-1 = e_0 < … < e_n = 1`.
    pub fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.cells.len() + 1);
        if let Some(first) = self.cells.first() {
            e.push(first.left);
        }
        e.extend(self.cells.iter().map(|c| c.right));
        e
    }

    /// Index of the cell whose closure contains `x` (left-biased on edges).
    pub fn locate(&self, x: f64) -> Option<usize> {
        if self.cells.is_empty() {
            return None;
        }
        let i = self.cells.partition_point(|c| c.right < x);
        (i < self.cells.len() && self.cells[i].left <= x).then_some(i)
    }

    pub fn min_len(&self) -> f64 {
        self.cells.iter().map(Cell::len).fold(f64::INFINITY, f64::min)
    }
}

/// A piecewise expanding map `T: [-1,1] → [-1,1]`, undefined at breakpoints.
#[derive(Debug, Clone)]
pub struct PiecewiseMap {
    breakpoints: Vec<f64>,
    branches: Vec<Branch>,
    bounds: MapBounds,
}

impl PiecewiseMap {
    /// Instantiate branch expressions at parameter `a` on the given cells.
    ///
    /// Audits strict monotonicity, `λ > 1` and that images stay in `[-1, 1]`.
    pub fn new(breakpoints: Vec<f64>, exprs: Vec<Arc<Expr>>, a: f64) -> Result<Self> {
        if exprs.is_empty() || breakpoints.len() != exprs.len() + 1 {
            return Err(Error::InvalidMap(format!(
                "{} breakpoints for {} branches",
                breakpoints.len(),
                exprs.len()
            )));
        }
        let mut breakpoints = breakpoints;
        let (first, last) = (breakpoints[0], *breakpoints.last().unwrap());
        if (first + 1.0).abs() > BREAKPOINT_TOL || (last - 1.0).abs() > BREAKPOINT_TOL {
            return Err(Error::InvalidMap(format!(
                "breakpoints must run from -1 to 1, got {first} .. {last}"
            )));
        }
        breakpoints[0] = -1.0;
        *breakpoints.last_mut().unwrap() = 1.0;
        for w in breakpoints.windows(2) {
            if !(w[1] - w[0] > BREAKPOINT_TOL) {
                return Err(Error::InvalidMap(format!(
                    "breakpoints {} and {} are out of order or collide",
                    w[0], w[1]
                )));
            }
        }
        let mut branches = Vec::with_capacity(exprs.len());
        let mut bounds = MapBounds {
            lambda: f64::INFINITY,
            big_lambda: 0.0,
            lipschitz: 0.0,
        };
        for (k, e) in exprs.into_iter().enumerate() {
            let (b, bb) = Branch::new(breakpoints[k], breakpoints[k + 1], e, a)?;
            bounds.lambda = bounds.lambda.min(bb.lambda);
            bounds.big_lambda = bounds.big_lambda.max(bb.big_lambda);
            bounds.lipschitz = bounds.lipschitz.max(bb.lipschitz);
            branches.push(b);
        }
        if !(bounds.lambda > 1.0) {
            return Err(Error::InvalidMap(format!(
                "not expanding: inf |T'| = {} on the audit grid",
                bounds.lambda
            )));
        }
        Ok(PiecewiseMap {
            breakpoints,
            branches,
            bounds,
        })
    }

    /// Rebuild from branches that already carry audited cells, keeping
    /// breakpoints. Used by the expansion operator.
    pub(crate) fn from_branches(branches: Vec<Branch>, bounds: MapBounds) -> Self {
        let mut breakpoints: Vec<f64> = branches.iter().map(|b| b.left).collect();
        breakpoints.push(branches.last().map_or(1.0, |b| b.right));
        PiecewiseMap {
            breakpoints,
            branches,
            bounds,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn bounds(&self) -> MapBounds {
        self.bounds
    }

    /// Index of the branch cell containing `x`.
    pub fn branch_index(&self, x: f64) -> Result<usize> {
        locate_branch(&self.breakpoints, x)
    }

    /// `T(x)`, clipped to `[-1, 1]`.
    pub fn eval_map(&self, x: f64) -> Result<f64> {
        let k = self.branch_index(x)?;
        Ok(self.branches[k].eval(x).clamp(-1.0, 1.0))
    }

    /// `T'(x)` of the active branch.
    pub fn eval_deriv(&self, x: f64) -> Result<f64> {
        let k = self.branch_index(x)?;
        Ok(self.branches[k].deriv(x))
    }

    /// `𝒫(T)`: one cell per branch with words of length one.
    pub fn branch_partition(&self) -> Partition {
        Partition {
            depth: 1,
            cells: self
                .branches
                .iter()
                .enumerate()
                .map(|(k, b)| Cell {
                    left: b.left,
                    right: b.right,
                    word: Word(vec![k as u16]),
                })
                .collect(),
        }
    }

    /// `𝒫_j = 𝒫(T^j)` by repeated pull-back through the monotone branches.
    pub fn refine_partition(&self, j: usize) -> Result<Partition> {
        if j == 0 {
            return Err(Error::Precondition("refinement depth must be positive".into()));
        }
        let log2 = self.bounds.big_lambda.max(self.branch_count() as f64).log2();
        if j as f64 * log2 > CELL_GUARD_LOG2 {
            return Err(Error::CellCountExceeded {
                cells: 2f64.powf(j as f64 * log2),
            });
        }
        let mut p = self.branch_partition();
        for _ in 1..j {
            p = self.pull_back(&p)?;
        }
        Ok(p)
    }

    /// Given `𝒫_j`, build `𝒫_{j+1}` with cells `D_k ∩ f_k^{-1}(C)`.
    pub fn pull_back(&self, p: &Partition) -> Result<Partition> {
        let edges = p.edges();
        let mut cells = Vec::new();
        for (k, br) in self.branches.iter().enumerate() {
            let (lo, hi) = br.image();
            // image-side cut points: lo, interior partition edges, hi
            let start = edges.partition_point(|e| *e <= lo + SLIVER);
            let end = edges.partition_point(|e| *e < hi - SLIVER);
            let mut ys = Vec::with_capacity(end.saturating_sub(start) + 2);
            ys.push(lo);
            ys.extend_from_slice(&edges[start..end.max(start)]);
            ys.push(hi);
            let xs = ys
                .iter()
                .map(|&y| br.invert(y))
                .collect::<Result<Vec<_>>>()?;
            let mut pieces: Vec<Cell> = Vec::with_capacity(ys.len() - 1);
            for i in 0..ys.len() - 1 {
                let ymid = 0.5 * (ys[i] + ys[i + 1]);
                let Some(ci) = p.locate(ymid) else { continue };
                let mut word = Vec::with_capacity(p.depth + 1);
                word.push(k as u16);
                word.extend_from_slice(&p.cells[ci].word.0);
                let (x0, x1) = (xs[i].min(xs[i + 1]), xs[i].max(xs[i + 1]));
                if x1 > x0 {
                    pieces.push(Cell {
                        left: x0,
                        right: x1,
                        word: Word(word),
                    });
                }
            }
            if !br.increasing {
                pieces.reverse();
            }
            cells.extend(pieces);
            if cells.len() > MAX_MATERIALIZED_CELLS {
                return Err(Error::CellCountExceeded {
                    cells: cells.len() as f64,
                });
            }
        }
        Ok(Partition {
            depth: p.depth + 1,
            cells,
        })
    }

    /// `[x0, T x0, …, T^n x0]`; fails with `OrbitTruncated` at the first
    /// breakpoint hit.
    pub fn iterate(&self, x0: f64, n: usize) -> Result<Vec<f64>> {
        let mut orbit = Vec::with_capacity(n + 1);
        orbit.push(x0);
        let mut x = x0;
        for step in 0..n {
            match self.eval_map(x) {
                Ok(y) => {
                    x = y;
                    orbit.push(x);
                }
                Err(Error::BreakpointHit { .. }) | Err(Error::Precondition(_)) => {
                    return Err(Error::OrbitTruncated { step, orbit });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(orbit)
    }

    /// Push both endpoints of a cell through the branches named by `word`
    /// and return the sorted image interval of `T^{|word|}` on the cell.
    pub fn word_image(&self, left: f64, right: f64, word: &Word) -> (f64, f64) {
        let (mut u, mut v) = (left, right);
        for &s in &word.0 {
            let b = &self.branches[s as usize];
            u = b.eval(u).clamp(-1.0, 1.0);
            v = b.eval(v).clamp(-1.0, 1.0);
        }
        (u.min(v), u.max(v))
    }

    /// Smallest `|(T^j)'|` over a few sample points of a cell of `𝒫_j`.
    pub fn word_min_derivative(&self, cell: &Cell, samples: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=samples {
            let mut x = cell.left + cell.len() * i as f64 / samples.max(1) as f64;
            let mut d = 1.0;
            for &s in &cell.word.0 {
                let b = &self.branches[s as usize];
                d *= b.deriv(x).abs();
                x = b.eval(x).clamp(-1.0, 1.0);
            }
            best = best.min(d);
        }
        best
    }
}

/// Index `k` with `b_k < x < b_{k+1}` for sorted breakpoints `b`.
pub fn locate_branch(breakpoints: &[f64], x: f64) -> Result<usize> {
    let i = breakpoints.partition_point(|b| *b <= x);
    // nearest breakpoints are i-1 and i
    for j in [i.wrapping_sub(1), i] {
        if let Some(&b) = breakpoints.get(j) {
            if (x - b).abs() < BREAKPOINT_TOL {
                return Err(Error::BreakpointHit { x, breakpoint: b });
            }
        }
    }
    if i == 0 || i >= breakpoints.len() {
        return Err(Error::Precondition(format!("x = {x} outside (-1, 1)")));
    }
    Ok(i - 1)
}

/// Expression for `h ∘ f ∘ h⁻¹` with `h(y) = 2(y-u)/(v-u) - 1`.
pub fn conjugate_branch_expr(f: &Arc<Expr>, u: f64, v: f64) -> Arc<Expr> {
    if u == -1.0 && v == 1.0 {
        return f.clone();
    }
    let half = (v - u) / 2.0;
    let inner = expr::add(Expr::num(u), expr::mul(Expr::num(half), expr::add(Expr::x(), Expr::num(1.0))));
    let composed = f.substitute(Var::X, &inner);
    conjugate_point_expr(&composed, u, v)
}

/// Expression for `h(b)` where `b` is a point of `[u, v]`.
pub fn conjugate_point_expr(b: &Arc<Expr>, u: f64, v: f64) -> Arc<Expr> {
    if u == -1.0 && v == 1.0 {
        return b.clone();
    }
    expr::sub(
        expr::mul(Expr::num(2.0 / (v - u)), expr::sub(b.clone(), Expr::num(u))),
        Expr::num(1.0),
    )
}

/// Conjugate a map on `[u, v]` to the reference interval `[-1, 1]` by the
/// affine change of variables `h(y) = 2(y-u)/(v-u) - 1`.
pub fn conjugate_to_reference(
    u: f64,
    v: f64,
    breakpoints: &[f64],
    branches: &[Arc<Expr>],
    a: f64,
) -> Result<PiecewiseMap> {
    if !(u < v) {
        return Err(Error::Precondition(format!("empty domain [{u}, {v}]")));
    }
    let h = |y: f64| 2.0 * (y - u) / (v - u) - 1.0;
    let bps = breakpoints.iter().map(|&b| h(b)).collect();
    let exprs = branches.iter().map(|f| conjugate_branch_expr(f, u, v)).collect();
    PiecewiseMap::new(bps, exprs, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    pub(crate) fn doubling() -> PiecewiseMap {
        PiecewiseMap::new(
            vec![-1.0, 0.0, 1.0],
            vec![parse("2*x + 1").unwrap(), parse("2*x - 1").unwrap()],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn eval_map_doubling() {
        let t = doubling();
        assert_eq!(t.eval_map(-0.5).unwrap(), 0.0);
        assert_eq!(t.eval_map(0.25).unwrap(), -0.5);
        assert!(matches!(t.eval_map(0.0), Err(Error::BreakpointHit { .. })));
        assert!(matches!(t.eval_map(1e-13), Err(Error::BreakpointHit { .. })));
        assert_eq!(t.eval_deriv(0.3).unwrap(), 2.0);
    }

    #[test]
    fn power_rule_branch() {
        // x² on (0.5, 1) with a second branch to fill the domain
        let t = PiecewiseMap::new(
            vec![-1.0, 0.5, 1.0],
            vec![parse("(4*x + 1)/3").unwrap(), parse("(8*x^2 - 5)/3").unwrap()],
            0.0,
        )
        .unwrap();
        assert!((t.eval_deriv(0.7).unwrap() - 16.0 * 0.7 / 3.0).abs() < 1e-12);
        let b = Branch::new(0.5, 1.0, parse("x^2").unwrap(), 0.0).unwrap().0;
        assert!((b.deriv(0.7) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn branch_partitions() {
        let p = doubling().branch_partition();
        assert_eq!(p.len(), 2);
        assert_eq!((p.cells[0].left, p.cells[0].right), (-1.0, 0.0));
        assert_eq!(p.cells[0].word.to_string(), "1");
        assert_eq!(p.cells[1].word.to_string(), "2");

        let single = PiecewiseMap::new(vec![-1.0, 1.0], vec![parse("x").unwrap()], 0.0);
        assert!(matches!(single, Err(Error::InvalidMap(_))), "slope 1 is not expanding");

        let three = PiecewiseMap::new(
            vec![-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0],
            vec![
                parse("3*x + 2").unwrap(),
                parse("3*x").unwrap(),
                parse("3*x - 2").unwrap(),
            ],
            0.0,
        )
        .unwrap();
        let p = three.branch_partition();
        assert_eq!(p.len(), 3);
        assert!(p.cells.windows(2).all(|w| w[0].right == w[1].left));
    }

    #[test]
    fn refine_doubling_depth_two() {
        let p = doubling().refine_partition(2).unwrap();
        assert_eq!(p.edges(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let words: Vec<String> = p.cells.iter().map(|c| c.word.to_string()).collect();
        assert_eq!(words, ["1 1", "1 2", "2 1", "2 2"]);
        assert_eq!(doubling().refine_partition(5).unwrap().len(), 32);
        assert!(matches!(
            doubling().refine_partition(61),
            Err(Error::CellCountExceeded { .. })
        ));
    }

    #[test]
    fn iterate_doubling() {
        let t = doubling();
        match t.iterate(-0.5, 2) {
            Err(Error::OrbitTruncated { step, orbit }) => {
                assert_eq!(step, 1);
                assert_eq!(orbit, vec![-0.5, 0.0]);
            }
            other => panic!("{other:?}"),
        }
        let o = t.iterate(0.2, 3).unwrap();
        let want = [0.2, -0.6, -0.2, 0.6];
        for (x, w) in o.iter().zip(want) {
            assert!((x - w).abs() < 1e-15);
        }
        assert_eq!(t.iterate(0.3, 0).unwrap(), vec![0.3]);
    }

    #[test]
    fn conjugation() {
        // 2x mod 1 on [0, 1]
        let m = conjugate_to_reference(
            0.0,
            1.0,
            &[0.0, 0.5, 1.0],
            &[parse("2*x").unwrap(), parse("2*x - 1").unwrap()],
            0.0,
        )
        .unwrap();
        let d = doubling();
        assert_eq!(m.breakpoints(), d.breakpoints());
        for x in [-0.9, -0.3, 0.1, 0.77] {
            assert!((m.eval_map(x).unwrap() - d.eval_map(x).unwrap()).abs() < 1e-15);
        }
        assert_eq!(m.bounds().lambda, d.bounds().lambda);
        assert_eq!(m.bounds().big_lambda, d.bounds().big_lambda);

        let same = conjugate_to_reference(
            -1.0,
            1.0,
            d.breakpoints(),
            &d.branches().iter().map(|b| b.expr.clone()).collect::<Vec<_>>(),
            0.0,
        )
        .unwrap();
        assert_eq!(*same.branches()[0].expr, *d.branches()[0].expr);
    }

    #[test]
    fn word_parsing() {
        let w = Word::parse("1 1 2").unwrap();
        assert_eq!(w.0, vec![0, 0, 1]);
        assert_eq!(w.to_string(), "1 1 2");
        assert!(Word::parse("0 1").is_none());
    }
}
