//! Scaled families `T_a(x) = T(ax)` built from a template on `[0, ∞)`, the
//! hypothesis check for such families, and the bundled family files.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{self, parse, Expr, Var};
use crate::family::{MapFamily, MapSpec};
use crate::family_file::{parse_family_file, FamilyFileError};
use crate::map_model::Branch;

/// Samples per tile when auditing a template.
const TEMPLATE_GRID: usize = 1024;
/// Parameter samples used by [`scaled_family_check`].
const PARAM_GRID: usize = 65;
const FULL_TOL: f64 = 1e-12;

/// A finite prefix of a map `T: [0, ∞) → [0, 1]` smooth on each tile.
#[derive(Debug, Clone)]
pub struct Template {
    pub name: String,
    /// `0 = b_0 < b_1 < … < b_p`
    pub breakpoints: Vec<f64>,
    /// Tile expressions in `x`.
    pub branches: Vec<Arc<Expr>>,
    /// `inf |T'|` as audited.
    pub lambda0: f64,
}

impl Template {
    pub fn new(name: &str, breakpoints: Vec<f64>, branches: Vec<Arc<Expr>>) -> Result<Self> {
        if breakpoints.len() != branches.len() + 1 || branches.is_empty() {
            return Err(Error::InvalidMap("template needs p + 1 breakpoints for p tiles".into()));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMap("template breakpoints must increase from 0".into()));
        }
        let mut lambda0 = f64::INFINITY;
        for (i, f) in branches.iter().enumerate() {
            if f.depends_on(Var::A) {
                return Err(Error::InvalidMap(format!("tile {i} depends on a")));
            }
            let (l, r) = (breakpoints[i], breakpoints[i + 1]);
            let (_, bounds) = Branch::new(l, r, f.clone(), 0.0)?;
            lambda0 = lambda0.min(bounds.lambda);
            for k in 0..=TEMPLATE_GRID {
                let y = f.eval(l + (r - l) * k as f64 / TEMPLATE_GRID as f64, 0.0);
                if !(-1e-12..=1.0 + 1e-12).contains(&y) {
                    return Err(Error::InvalidMap(format!("tile {i} leaves [0, 1]: T = {y}")));
                }
            }
        }
        if lambda0 < 1.0 {
            return Err(Error::InvalidMap(format!("template has inf |T'| = {lambda0} < 1")));
        }
        Ok(Template {
            name: name.to_string(),
            breakpoints,
            branches,
            lambda0,
        })
    }

    pub fn tile_image(&self, i: usize) -> (f64, f64) {
        let f = &self.branches[i];
        let (u, v) = (
            f.eval(self.breakpoints[i], 0.0),
            f.eval(self.breakpoints[i + 1], 0.0),
        );
        (u.min(v), u.max(v))
    }

    /// Tiles intersecting `[0, sup I]`; fails when a kept breakpoint
    /// `b_i/a` would cross `1` inside `I`.
    fn tiles_for(&self, lo: f64, hi: f64) -> Result<usize> {
        let p = self.breakpoints.partition_point(|&b| b < hi);
        if p >= self.breakpoints.len() {
            return Err(Error::InvalidMap(format!(
                "template ends at {} before sup I = {hi}",
                self.breakpoints.last().unwrap()
            )));
        }
        if let Some(&b) = self.breakpoints[1..p].iter().find(|&&b| b >= lo) {
            return Err(Error::InvalidMap(format!(
                "breakpoint {b}/a reaches 1 for a in [{lo}, {hi}]; the branch count would change"
            )));
        }
        Ok(p)
    }
}

/// `T_a(x) = T(ax)` on `[0, 1]` for `a ∈ I`, conjugated to `[-1, 1]`.
pub fn build_scaled_family(tpl: &Template, interval: (f64, f64), point_x: Arc<Expr>) -> Result<MapFamily> {
    let (lo, hi) = interval;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Precondition(format!("need 0 < inf I < sup I, got [{lo}, {hi}]")));
    }
    let p = tpl.tiles_for(lo, hi)?;
    let ax = expr::mul(Expr::a(), Expr::x());
    let mut breakpoints: Vec<Arc<Expr>> = tpl.breakpoints[..p]
        .iter()
        .map(|&b| if b == 0.0 { Expr::num(0.0) } else { expr::div(Expr::num(b), Expr::a()) })
        .collect();
    breakpoints.push(Expr::num(1.0));
    let branches = tpl.branches[..p].iter().map(|f| f.substitute(Var::X, &ax)).collect();
    MapFamily::new(MapSpec {
        name: Some(tpl.name.clone()),
        domain: (0.0, 1.0),
        param_interval: interval,
        breakpoints,
        branches,
        point_x,
        lipschitz: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledFamilyReport {
    pub delta: f64,
    pub lambda0: f64,
    /// `λ₀⁻¹(1 + δ⁻¹)`
    pub a0: f64,
    pub interval: (f64, f64),
    /// `((1-δ)/2, (1+δ)/2)`
    pub window: (f64, f64),
    /// Tiles whose image misses part of the window.
    pub tiles_missing_window: Vec<usize>,
    /// Full tile whose scaled copy stays inside the window for all `a ∈ I`.
    pub witness: Option<usize>,
    /// `1 + 1/δ`
    pub required_inf_derivative: f64,
    /// `inf_{a ∈ I} |T_a'| = λ₀ inf I`
    pub observed_inf_derivative: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Check the three hypotheses of the scaled-family typicality criterion.
pub fn scaled_family_check(tpl: &Template, delta: f64, interval: (f64, f64)) -> Result<ScaledFamilyReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("delta = {delta} is not in (0, 1)")));
    }
    let (lo, hi) = interval;
    let a0 = (1.0 + 1.0 / delta) / tpl.lambda0;
    if lo < a0 {
        return Err(Error::Precondition(format!(
            "interval starts at {lo}, below a0 = {a0}"
        )));
    }
    let p = tpl.tiles_for(lo, hi)?;
    let window = ((1.0 - delta) / 2.0, (1.0 + delta) / 2.0);
    let tiles_missing_window: Vec<usize> = (0..p)
        .filter(|&i| {
            let (u, v) = tpl.tile_image(i);
            !(u <= window.0 && window.1 <= v)
        })
        .collect();
    let grid: Vec<f64> = (0..PARAM_GRID)
        .map(|k| lo + (hi - lo) * k as f64 / (PARAM_GRID - 1) as f64)
        .collect();
    let witness = (0..p).find(|&i| {
        let (u, v) = tpl.tile_image(i);
        let full = u.abs() < FULL_TOL && (v - 1.0).abs() < FULL_TOL;
        let (b0, b1) = (tpl.breakpoints[i], tpl.breakpoints[i + 1]);
        full && grid.iter().all(|&a| b0 / a >= window.0 && b1 / a <= window.1)
    });
    let required = 1.0 + 1.0 / delta;
    let observed = tpl.lambda0 * lo;
    let margin = observed - required;
    Ok(ScaledFamilyReport {
        delta,
        lambda0: tpl.lambda0,
        a0,
        interval,
        window,
        pass: tiles_missing_window.is_empty() && witness.is_some() && margin > 0.0,
        tiles_missing_window,
        witness,
        required_inf_derivative: required,
        observed_inf_derivative: observed,
        margin,
    })
}

fn tpl(name: &str, bps: &[f64], exprs: &[&str]) -> Template {
    Template::new(
        name,
        bps.to_vec(),
        exprs.iter().map(|e| parse(e).expect("bundled template parses")).collect(),
    )
    .expect("bundled template is valid")
}

/// Five tiles with `λ₀ = 4`; `(0.35, 0.6)` is a full tile inside the
/// window `(0.3, 0.7)` for `a ∈ [1, 1.04]`.
pub fn scaled_tiles_template() -> Template {
    tpl(
        "scaled-tiles",
        &[0.0, 0.1, 0.35, 0.6, 0.8, 1.05],
        &[
            "0.2 + 6*x",
            "4*(x - 0.1)",
            "4*(x - 0.35)",
            "0.1 + 4.5*(x - 0.6)",
            "4*(x - 0.8)",
        ],
    )
}

/// [`scaled_tiles_template`] with the middle full tile flattened to `(0.05, 0.95)`.
pub fn scaled_tiles_without_full_tile() -> Template {
    tpl(
        "scaled-tiles-no-full-tile",
        &[0.0, 0.1, 0.35, 0.6, 0.8, 1.05],
        &[
            "0.2 + 6*x",
            "4*(x - 0.1)",
            "0.05 + 3.6*(x - 0.35)",
            "0.1 + 4.5*(x - 0.6)",
            "4*(x - 0.8)",
        ],
    )
}

pub const SCALED_TILES_DELTA: f64 = 0.4;
pub const SCALED_TILES_INTERVAL: (f64, f64) = (1.0, 1.04);

/// Bundled family files: `(name, description, contents)`.
pub const GALLERY: &[(&str, &str, &str)] = &[
    (
        "doubling",
        "x -> 2x mod 2 on [-1, 1], constant in a, X(a) = a",
        include_str!("../gallery/doubling.json"),
    ),
    (
        "interior3",
        "three branches with interior, full and boundary-touching images",
        include_str!("../gallery/interior3.json"),
    ),
    (
        "invariant-half",
        "negative control: (0, 1) is invariant, so covering fails",
        include_str!("../gallery/invariant-half.json"),
    ),
    (
        "scaled-tiles",
        "scaled family T(ax) on [0, 1] with a full tile inside the window",
        include_str!("../gallery/scaled-tiles.json"),
    ),
    (
        "four-cases",
        "one branch of each expansion case, for expand-demo",
        include_str!("../gallery/four-cases.json"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    GALLERY.iter().map(|g| g.0)
}

pub fn source(name: &str) -> Option<&'static str> {
    GALLERY.iter().find(|g| g.0 == name).map(|g| g.2)
}

/// Parse a bundled family.
pub fn load(name: &str) -> std::result::Result<MapFamily, FamilyFileError> {
    let text = source(name)
        .ok_or_else(|| FamilyFileError::Semantic(Error::Precondition(format!("no bundled family '{name}'"))))?;
    parse_family_file(text)
}
