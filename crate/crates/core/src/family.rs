//! One-parameter families `a ↦ T_a`, the parametrised orbit `ξ_j(a) = T_a^j(X(a))`,
//! the parameter partitions on which `ξ_j` is smooth, and the checks on `ξ_j'`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::map_model::{
    conjugate_branch_expr, conjugate_point_expr, locate_branch, PiecewiseMap, Word, BREAKPOINT_TOL,
};
use crate::roots::bracketed_root;

/// Parameters in the family audit grid.
pub const VERIFY_GRID: usize = 33;
/// `x` samples per branch when estimating `sup |∂_a f|`.
const PARAM_DERIV_SAMPLES: usize = 257;
/// Most sign-change subsamples per cell when splitting parameter partitions.
pub const PARTITION_SAMPLES: usize = 512;
/// Fewest subsamples per cell.
const MIN_PARTITION_SAMPLES: usize = 16;
/// Probe points used to estimate the variation of `ξ` on a cell.
const VARIATION_PROBES: usize = 8;
/// Subsamples per smallest branch length of estimated variation.
const SAMPLES_PER_GAP: f64 = 8.0;
/// Split points closer than this are merged.
pub const ROOT_MERGE_TOL: f64 = 1e-10;
/// A parameter whose distance to a smoothness boundary of `ξ_j` falls below
/// this is rejected by `xi_deriv`.
pub const NON_SMOOTH_TOL: f64 = 1e-12;
/// Grid used for the inf/sup in the derivative-growth check.
pub const GROWTH_GRID: usize = 4096;
/// Safety deflation of the left side and inflation of the right side.
pub const GROWTH_SAFETY: f64 = 0.01;
const MAX_PARAM_CELLS: usize = 1 << 20;

/// A family definition as written: expressions on the domain `[u, v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub name: Option<String>,
    pub domain: (f64, f64),
    pub param_interval: (f64, f64),
    /// `b_0(a), …, b_p(a)`
    pub breakpoints: Vec<Arc<Expr>>,
    /// `f_1(x, a), …, f_p(x, a)`
    pub branches: Vec<Arc<Expr>>,
    pub point_x: Arc<Expr>,
    /// Declared Lipschitz constant of `T_a'`; audited if present.
    pub lipschitz: Option<f64>,
}

/// Bounds audited over the family verification grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyBounds {
    pub lambda: f64,
    pub big_lambda: f64,
    /// Audited `sup |T_a''|`.
    pub lipschitz: f64,
    pub declared_lipschitz: Option<f64>,
    /// `sup |∂_a f_k(a, x)|`, which is also `sup |∂_a T_a(x)|`.
    pub eta: f64,
    /// `sup |b_i'(a)|`
    pub zeta: f64,
}

impl FamilyBounds {
    /// The declared Lipschitz constant when given, else the audited one.
    pub fn lipschitz_used(&self) -> f64 {
        self.declared_lipschitz.unwrap_or(self.lipschitz)
    }
}

/// A parametrised family on the reference interval `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct MapFamily {
    name: Option<String>,
    interval: (f64, f64),
    breakpoints: Vec<Arc<Expr>>,
    branches: Vec<Arc<Expr>>,
    point_x: Arc<Expr>,
    bounds: FamilyBounds,
    source: MapSpec,
}

/// `ξ_j(a)` together with its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiJet {
    pub value: f64,
    /// `ξ_j'(a)`
    pub deriv: f64,
    /// `(T_a^j)'(X(a))`
    pub map_deriv: f64,
}

/// One cell of `𝒬_j` with the itinerary of `X(a)` along it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCell {
    pub lo: f64,
    pub hi: f64,
    #[serde(serialize_with = "word_string")]
    pub word: Word,
}

fn word_string<S: serde::Serializer>(w: &Word, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&w.to_string())
}

/// Two split points of `𝒬_j` closer than [`ROOT_MERGE_TOL`] were merged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootClusterWarning {
    pub step: usize,
    pub kept: f64,
    pub dropped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamPartition {
    pub depth: usize,
    pub cells: Vec<ParamCell>,
    pub warnings: Vec<RootClusterWarning>,
}

impl ParamPartition {
    /// Interior cell boundaries.
    pub fn boundaries(&self) -> Vec<f64> {
        self.cells.iter().skip(1).map(|c| c.lo).collect()
    }

    pub fn locate(&self, a: f64) -> Option<&ParamCell> {
        self.cells.iter().find(|c| c.lo <= a && a <= c.hi)
    }

    /// Distance from `a` to the nearest interior boundary.
    pub fn boundary_distance(&self, a: f64) -> f64 {
        self.boundaries()
            .iter()
            .map(|b| (a - b).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Envelope of `|ξ_j'(a) / (T_a^j)'(X(a))|` over the grid for one `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub j: usize,
    pub min: f64,
    pub max: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeRatioReport {
    pub check: &'static str,
    pub grid: usize,
    pub rows: Vec<RatioRow>,
    /// All ratios for `j ≥ 1` vanish.
    pub degenerate: bool,
    /// `max/min` over the upper half of the `j` range.
    pub spread: f64,
    /// Envelope ends moved by less than 10% between the last two `j`.
    pub stabilizes: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeGrowthReport {
    pub check: &'static str,
    pub grid: usize,
    pub j0: usize,
    /// `inf |ξ_{j0}'|`, deflated.
    pub lhs: f64,
    /// `sup |∂_a T_a| / (λ - 1) + 2L`, inflated.
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub skipped: usize,
    /// Parameter attaining the infimum.
    pub witnesses: Vec<f64>,
}

impl MapFamily {
    /// Conjugate the spec to `[-1, 1]` and audit it on the verification grid.
    pub fn new(spec: MapSpec) -> Result<Self> {
        let p = spec.branches.len();
        if p == 0 || spec.breakpoints.len() != p + 1 {
            return Err(Error::InvalidMap(format!(
                "{} breakpoints for {} branches",
                spec.breakpoints.len(),
                p
            )));
        }
        let (lo, hi) = spec.param_interval;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidMap(format!("empty parameter interval [{lo}, {hi}]")));
        }
        let (u, v) = spec.domain;
        if !(u < v) {
            return Err(Error::InvalidMap(format!("empty domain [{u}, {v}]")));
        }
        let mut family = MapFamily {
            name: spec.name.clone(),
            interval: (lo, hi),
            breakpoints: spec
                .breakpoints
                .iter()
                .map(|b| conjugate_point_expr(b, u, v))
                .collect(),
            branches: spec
                .branches
                .iter()
                .map(|f| conjugate_branch_expr(f, u, v))
                .collect(),
            point_x: conjugate_point_expr(&spec.point_x, u, v),
            bounds: FamilyBounds {
                lambda: f64::INFINITY,
                big_lambda: 0.0,
                lipschitz: 0.0,
                declared_lipschitz: spec.lipschitz,
                eta: 0.0,
                zeta: 0.0,
            },
            source: spec,
        };
        family.audit()?;
        Ok(family)
    }

    fn audit(&mut self) -> Result<()> {
        let mut b = self.bounds;
        b.lambda = f64::INFINITY;
        for a in self.verify_grid() {
            let map = self.instantiate(a)?;
            let mb = map.bounds();
            b.lambda = b.lambda.min(mb.lambda);
            b.big_lambda = b.big_lambda.max(mb.big_lambda);
            b.lipschitz = b.lipschitz.max(mb.lipschitz);
            for br in map.branches() {
                for i in 0..=PARAM_DERIV_SAMPLES {
                    let x = br.left + br.len() * i as f64 / PARAM_DERIV_SAMPLES as f64;
                    b.eta = b.eta.max(br.param_deriv(x).abs());
                }
            }
            for e in &self.breakpoints {
                b.zeta = b.zeta.max(e.eval_d(0.0, a, Var::A).1.abs());
            }
            let xa = self.point_x.eval(0.0, a);
            if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&xa) {
                return Err(Error::InvalidMap(format!(
                    "at a = {a}: X(a) = {xa} lies outside the domain"
                )));
            }
        }
        self.bounds = b;
        Ok(())
    }

    /// `VERIFY_GRID` equally spaced parameters including both ends of `I`.
    pub fn verify_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.interval;
        (0..VERIFY_GRID)
            .map(|i| lo + (hi - lo) * i as f64 / (VERIFY_GRID - 1) as f64)
            .collect()
    }

    /// `k` cell midpoints `lo + (i + 1/2)(hi - lo)/k` of the parameter interval.
    pub fn midpoint_grid(&self, k: usize) -> Vec<f64> {
        let (lo, hi) = self.interval;
        (0..k)
            .map(|i| lo + (i as f64 + 0.5) * (hi - lo) / k as f64)
            .collect()
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn bounds(&self) -> FamilyBounds {
        self.bounds
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn branch_exprs(&self) -> &[Arc<Expr>] {
        &self.branches
    }

    pub fn breakpoint_exprs(&self) -> &[Arc<Expr>] {
        &self.breakpoints
    }

    pub fn point_expr(&self) -> &Arc<Expr> {
        &self.point_x
    }

    /// The definition this family was built from.
    pub fn source(&self) -> &MapSpec {
        &self.source
    }

    /// The family written directly on `[-1, 1]`.
    pub fn reference_spec(&self) -> MapSpec {
        MapSpec {
            name: self.name.clone(),
            domain: (-1.0, 1.0),
            param_interval: self.interval,
            breakpoints: self.breakpoints.clone(),
            branches: self.branches.clone(),
            point_x: self.point_x.clone(),
            lipschitz: self.bounds.declared_lipschitz,
        }
    }

    fn check_param(&self, a: f64) -> Result<()> {
        let (lo, hi) = self.interval;
        if a.is_nan() || a < lo - 1e-12 || a > hi + 1e-12 {
            return Err(Error::ParameterOutOfRange { a, lo, hi });
        }
        Ok(())
    }

    /// `b_0(a), …, b_p(a)`.
    pub fn breakpoints_at(&self, a: f64) -> Vec<f64> {
        self.breakpoints.iter().map(|b| b.eval(0.0, a)).collect()
    }

    /// `X(a)`.
    pub fn point_at(&self, a: f64) -> f64 {
        self.point_x.eval(0.0, a)
    }

    /// `T_a` as a validated [`PiecewiseMap`].
    pub fn instantiate(&self, a: f64) -> Result<PiecewiseMap> {
        self.check_param(a)?;
        let bps = self.breakpoints_at(a);
        for (i, w) in bps.windows(2).enumerate() {
            if !(w[1] - w[0] > BREAKPOINT_TOL) {
                return Err(Error::InvalidMap(format!(
                    "at a = {a}: breakpoints out of order, b_{i} = {} and b_{} = {}",
                    w[0],
                    i + 1,
                    w[1]
                )));
            }
        }
        PiecewiseMap::new(bps, self.branches.clone(), a).map_err(|e| match e {
            Error::InvalidMap(m) => Error::InvalidMap(format!("at a = {a}: {m}")),
            other => other,
        })
    }

    /// `[ξ_0(a), …, ξ_j(a)]`, truncated at the first breakpoint hit.
    pub fn xi_orbit(&self, a: f64, j: usize) -> Result<Vec<f64>> {
        self.check_param(a)?;
        let bps = self.breakpoints_at(a);
        let mut x = self.point_at(a);
        let mut orbit = Vec::with_capacity(j + 1);
        orbit.push(x);
        for step in 0..j {
            let Ok(k) = locate_branch(&bps, x) else {
                return Err(Error::OrbitTruncated { step, orbit });
            };
            x = self.branches[k].eval(x, a).clamp(-1.0, 1.0);
            orbit.push(x);
        }
        Ok(orbit)
    }

    /// `ξ_j(a) = T_a^j(X(a))`.
    pub fn xi(&self, a: f64, j: usize) -> Result<f64> {
        Ok(*self.xi_orbit(a, j)?.last().unwrap())
    }

    /// `ξ_j'(a)` by forward recursion `ξ_{i+1}' = ∂_a f(ξ_i) + f'(ξ_i) ξ_i'`.
    pub fn xi_deriv(&self, a: f64, j: usize) -> Result<f64> {
        Ok(self.xi_jet(a, j)?.deriv)
    }

    /// `ξ_j(a)`, `ξ_j'(a)` and `(T_a^j)'(X(a))` in one pass.
    pub fn xi_jet(&self, a: f64, j: usize) -> Result<XiJet> {
        self.check_param(a)?;
        let bjets: Vec<(f64, f64)> = self
            .breakpoints
            .iter()
            .map(|b| b.eval_d(0.0, a, Var::A))
            .collect();
        let bps: Vec<f64> = bjets.iter().map(|b| b.0).collect();
        let (mut x, mut dx) = self.point_x.eval_d(0.0, a, Var::A);
        let mut map_deriv = 1.0;
        for step in 0..j {
            for &(b, db) in &bjets[1..bjets.len() - 1] {
                let gap = (x - b).abs();
                let rate = (dx - db).abs();
                if gap < BREAKPOINT_TOL || gap < NON_SMOOTH_TOL * rate {
                    return Err(Error::NonSmoothPoint { a, j: step });
                }
            }
            let k = locate_branch(&bps, x).map_err(|_| Error::NonSmoothPoint { a, j: step })?;
            let f = &self.branches[k];
            let (_, fa) = f.eval_d(x, a, Var::A);
            let (fx, fxd) = f.eval_d(x, a, Var::X);
            dx = fa + fxd * dx;
            map_deriv *= fxd;
            x = fx.clamp(-1.0, 1.0);
        }
        Ok(XiJet {
            value: x,
            deriv: dx,
            map_deriv,
        })
    }

    /// `ξ_{|word|}` following a fixed itinerary, continued across breakpoints.
    pub fn xi_along(&self, word: &Word, a: f64) -> f64 {
        let mut x = self.point_at(a);
        for &k in &word.0 {
            x = self.branches[k as usize].eval(x, a).clamp(-1.0, 1.0);
        }
        x
    }

    /// Expression for `ξ_{|word|}` along a fixed itinerary.
    pub fn xi_expr(&self, word: &Word) -> Arc<Expr> {
        let mut e = self.point_x.clone();
        for &k in &word.0 {
            e = self.branches[k as usize].substitute(Var::X, &e);
        }
        e
    }

    /// Parameters in `cell` where `ξ` along its word meets an interior
    /// breakpoint. The scan density follows the variation of `ξ` on the
    /// cell measured against the shortest branch `gap`.
    fn crossings(&self, cell: &ParamCell, gap: f64) -> Vec<f64> {
        let (lo, hi) = (cell.lo, cell.hi);
        let xi = |a: f64| self.xi_along(&cell.word, a);
        let probe = |k: usize, n: usize| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 };
        let mut variation = 0.0;
        let mut prev = xi(lo);
        for k in 1..=VARIATION_PROBES {
            let v = xi(probe(k, VARIATION_PROBES));
            variation += (v - prev).abs();
            prev = v;
        }
        let samples = ((SAMPLES_PER_GAP * variation / gap).ceil() as usize)
            .clamp(MIN_PARTITION_SAMPLES, PARTITION_SAMPLES);
        let interior = &self.breakpoints[1..self.breakpoints.len() - 1];
        let g_all = |a: f64| {
            let x = xi(a);
            interior.iter().map(|b| x - b.eval(0.0, a)).collect::<Vec<f64>>()
        };
        let mut roots = Vec::new();
        let mut a0 = lo;
        let mut g0 = g_all(a0);
        for k in 1..=samples {
            let a1 = probe(k, samples);
            let g1 = g_all(a1);
            for (m, b) in interior.iter().enumerate() {
                if g0[m] == 0.0 {
                    if k > 1 {
                        roots.push(a0);
                    }
                } else if g1[m] != 0.0 && g0[m].signum() != g1[m].signum() {
                    let g = |a: f64| xi(a) - b.eval(0.0, a);
                    roots.extend(bracketed_root(g, |_| 0.0, a0, a1, 0));
                }
            }
            a0 = a1;
            g0 = g1;
        }
        roots
    }

    /// `𝒬_j`: maximal subintervals of `I` on which `ξ_0, …, ξ_{j-1}` avoid
    /// the breakpoints.
    pub fn param_partition(&self, j: usize) -> Result<ParamPartition> {
        let (lo, hi) = self.interval;
        let mut cells = vec![ParamCell {
            lo,
            hi,
            word: Word::default(),
        }];
        let mut warnings = Vec::new();
        let gap = self
            .verify_grid()
            .iter()
            .flat_map(|&a| {
                let b = self.breakpoints_at(a);
                (1..b.len()).map(move |i| b[i] - b[i - 1]).collect::<Vec<_>>()
            })
            .fold(f64::INFINITY, f64::min);
        for step in 0..j {
            let mut next = Vec::with_capacity(cells.len() * 2);
            for cell in &cells {
                let mut cuts = self.crossings(cell, gap);
                cuts.sort_by(f64::total_cmp);
                let mut merged: Vec<f64> = Vec::with_capacity(cuts.len());
                for c in cuts {
                    match merged.last() {
                        Some(&last) if c - last < ROOT_MERGE_TOL => warnings.push(RootClusterWarning {
                            step,
                            kept: last,
                            dropped: c,
                        }),
                        _ => merged.push(c),
                    }
                }
                let mut edges = Vec::with_capacity(merged.len() + 2);
                edges.push(cell.lo);
                edges.extend(merged.into_iter().filter(|c| *c > cell.lo && *c < cell.hi));
                edges.push(cell.hi);
                for w in edges.windows(2) {
                    if !(w[1] > w[0]) {
                        continue;
                    }
                    let mid = 0.5 * (w[0] + w[1]);
                    let x = self.xi_along(&cell.word, mid);
                    let k = locate_branch(&self.breakpoints_at(mid), x)?;
                    let mut word = cell.word.clone();
                    word.0.push(k as u16);
                    next.push(ParamCell {
                        lo: w[0],
                        hi: w[1],
                        word,
                    });
                }
            }
            if next.len() > MAX_PARAM_CELLS {
                return Err(Error::CellCountExceeded {
                    cells: next.len() as f64,
                });
            }
            cells = next;
        }
        Ok(ParamPartition {
            depth: j,
            cells,
            warnings,
        })
    }

    /// Envelopes of `|ξ_j'(a) / (T_a^j)'(X(a))|` for `j = 0..=j_max`.
    pub fn check_derivative_ratio(&self, j_max: usize, grid: &[f64]) -> DerivativeRatioReport {
        let mut rows = Vec::with_capacity(j_max + 1);
        for j in 0..=j_max {
            let mut row = RatioRow {
                j,
                min: f64::INFINITY,
                max: 0.0,
                evaluated: 0,
                skipped: 0,
            };
            for &a in grid {
                match self.xi_jet(a, j) {
                    Ok(jet) if jet.map_deriv != 0.0 => {
                        let r = (jet.deriv / jet.map_deriv).abs();
                        row.min = row.min.min(r);
                        row.max = row.max.max(r);
                        row.evaluated += 1;
                    }
                    _ => row.skipped += 1,
                }
            }
            rows.push(row);
        }
        let degenerate = rows.iter().skip(1).all(|r| r.evaluated == 0 || r.max == 0.0);
        let upper = &rows[(j_max / 2).max(1).min(rows.len() - 1)..];
        let lo = upper.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
        let hi = upper.iter().map(|r| r.max).fold(0.0, f64::max);
        let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let stabilizes = rows.len() >= 2 && {
            let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
            a.min > 0.0
                && ((b.min - a.min) / a.min).abs() < 0.1
                && ((b.max - a.max) / a.max).abs() < 0.1
        };
        DerivativeRatioReport {
            check: "derivative ratio",
            grid: grid.len(),
            rows,
            degenerate,
            spread,
            stabilizes,
            pass: !degenerate && spread.is_finite() && stabilizes,
        }
    }

    /// `inf_a |ξ_{j0}'(a)| ≥ sup |∂_a T_a| / (λ - 1) + 2L`, with a 1% safety
    /// margin on each side.
    pub fn check_derivative_growth(&self, j0: usize) -> DerivativeGrowthReport {
        let b = self.bounds;
        let rhs = (b.eta / (b.lambda - 1.0) + 2.0 * b.lipschitz_used()) * (1.0 + GROWTH_SAFETY);
        let mut inf = f64::INFINITY;
        let mut arg = f64::NAN;
        let mut skipped = 0;
        for a in self.midpoint_grid(GROWTH_GRID) {
            match self.xi_deriv(a, j0) {
                Ok(d) if d.abs() < inf => {
                    inf = d.abs();
                    arg = a;
                }
                Ok(_) => {}
                Err(_) => skipped += 1,
            }
        }
        let lhs = inf * (1.0 - GROWTH_SAFETY);
        let margin = lhs - rhs;
        DerivativeGrowthReport {
            check: "derivative growth",
            grid: GROWTH_GRID,
            j0,
            lhs,
            rhs,
            margin,
            pass: margin.is_finite() && margin >= 0.0,
            skipped,
            witnesses: if arg.is_nan() { vec![] } else { vec![arg] },
        }
    }

    /// The same family with `I` replaced by `[lo, hi] ⊆ I`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<MapFamily> {
        self.check_param(lo)?;
        self.check_param(hi)?;
        let mut spec = self.reference_spec();
        spec.param_interval = (lo, hi);
        MapFamily::new(spec)
    }

    /// The same maps with `X` replaced by `ξ_j`; requires `ξ_j` smooth on all of `I`.
    pub fn boost_point(&self, j: usize) -> Result<MapFamily> {
        if j == 0 {
            return Ok(self.clone());
        }
        let q = self.param_partition(j)?;
        if q.cells.len() != 1 {
            return Err(Error::NonSmoothPoint {
                a: q.cells[1].lo,
                j,
            });
        }
        let mut spec = self.reference_spec();
        spec.point_x = self.xi_expr(&q.cells[0].word);
        MapFamily::new(spec)
    }

    /// Replace branch expressions, keeping breakpoints, point and interval.
    pub(crate) fn with_branches(&self, branches: Vec<Arc<Expr>>, interval: (f64, f64)) -> Result<MapFamily> {
        let mut spec = self.reference_spec();
        spec.branches = branches;
        spec.param_interval = interval;
        MapFamily::new(spec)
    }
}

/// `a ↦ c` as an expression, for building families.
pub fn constant(c: f64) -> Arc<Expr> {
    Expr::num(c)
}

/// `(a - a0)·α + 1`
pub fn scale_schedule(a0: f64, alpha: f64) -> Arc<Expr> {
    expr::add(
        expr::mul(Expr::num(alpha), expr::sub(Expr::a(), Expr::num(a0))),
        Expr::num(1.0),
    )
}
