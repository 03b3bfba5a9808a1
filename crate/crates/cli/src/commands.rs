use std::io::Write;

use serde::Serialize;

use ergomap::covering::{check_weak_covering, search_large_image, LargeImageReport};
use ergomap::density::{density_lower_bound, stationary_density, ulam_matrix, DensityBoundsReport};
use ergomap::expand::{expand_map, family_constants, max_scale, perturbed_family, ExpansionCase, PerturbationPlan};
use ergomap::family::{DerivativeGrowthReport, DerivativeRatioReport, FamilyBounds, MapFamily};
use ergomap::gallery;
use ergomap::symbolic::{check_nested, NestedReport};
use ergomap::typicality::{self, OrbitOptions, SweepConfig};
use ergomap::PiecewiseMap;

use crate::render;
use crate::{emit, in_range, load_family, CheckArgs, CliError, DensityArgs, ExamplesAction, ExpandArgs, NestedArgs, Profile, Status, SweepArgs};

/// Ratio envelopes are tracked up to this iterate.
const RATIO_DEPTH: usize = 10;

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("reports serialize");
    s.push(b'\n');
    s
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

#[derive(Debug, Serialize)]
pub struct CoveringAt {
    pub a: f64,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct CoveringSummary {
    pub check: &'static str,
    pub n_max: usize,
    pub max_n: Option<usize>,
    pub pass: bool,
    pub rows: Vec<CoveringAt>,
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub family: Option<String>,
    pub interval: (f64, f64),
    pub bounds: FamilyBounds,
    pub weak_covering: CoveringSummary,
    pub large_image: LargeImageReport,
    pub derivative_growth: DerivativeGrowthReport,
    pub derivative_ratio: DerivativeRatioReport,
    pub density_bounds: DensityBoundsReport,
    pub pass: bool,
}

fn covering_summary(f: &MapFamily, grid: &[f64], n_max: usize) -> Result<CoveringSummary, CliError> {
    let mut rows = Vec::with_capacity(grid.len());
    for &a in grid {
        let t = f.instantiate(a)?;
        rows.push(match check_weak_covering(&t, n_max) {
            Ok(r) => CoveringAt {
                a,
                n: Some(r.max_n),
                error: None,
            },
            Err(e) => CoveringAt {
                a,
                n: None,
                error: Some(e.to_string()),
            },
        });
    }
    let pass = rows.iter().all(|r| r.n.is_some());
    Ok(CoveringSummary {
        check: "weak covering",
        n_max,
        max_n: if pass { rows.iter().filter_map(|r| r.n).max() } else { None },
        pass,
        rows,
    })
}

pub fn check(profile: Profile, args: &CheckArgs, out: &mut dyn Write) -> Result<Status, CliError> {
    let gamma = in_range("gamma", args.gamma.unwrap_or(profile.gamma()), 0.0, 1.0)?;
    let delta = args.delta.map(|d| in_range("delta", d, 0.0, 1.0)).transpose()?;
    let f = load_family(&args.family.family)?;
    let (lo, hi) = f.interval();
    let grid = linspace(lo, hi, args.grid as usize);
    let weak_covering = covering_summary(&f, &grid, args.n_max as usize)?;
    let large_image = search_large_image(&f, args.m_max as usize, delta, &grid)?;
    let derivative_growth = f.check_derivative_growth(args.j0 as usize);
    let derivative_ratio = f.check_derivative_ratio(RATIO_DEPTH, &grid);
    let density_bounds = f.check_density_bounds(&grid, args.bins as usize, gamma)?;
    let pass = weak_covering.pass
        && large_image.pass
        && derivative_growth.pass
        && derivative_ratio.pass
        && density_bounds.pass;
    let report = CheckReport {
        family: f.name().map(str::to_string),
        interval: (lo, hi),
        bounds: f.bounds(),
        weak_covering,
        large_image,
        derivative_growth,
        derivative_ratio,
        density_bounds,
        pass,
    };
    let bytes = if args.table {
        render::check_table(&report).into_bytes()
    } else {
        json(&report)
    };
    emit(&args.output, out, &bytes)?;
    Ok(if pass { Status::Ok } else { Status::CheckFailed })
}

pub fn density(args: &DensityArgs, out: &mut dyn Write) -> Result<Status, CliError> {
    let f = load_family(&args.family.family)?;
    let t = f.instantiate(args.a)?;
    let m = ulam_matrix(&t, args.bins as usize)?;
    let d = stationary_density(&m)?;
    let (min, max) = d.bounds();
    let mut text = String::new();
    text.push_str(&format!("# a = {}\n# bins = {}\n", args.a, d.bins));
    text.push_str(&format!("# iterations = {}\n", d.iterations));
    text.push_str(&format!("# fixed-point residual = {:e}\n", d.fixed_point_residual(&m)));
    text.push_str(&format!("# min = {min}\n# max = {max}\n"));
    if let Ok(cov) = check_weak_covering(&t, ergomap::covering::DEFAULT_N_MAX) {
        let s = t.bounds().big_lambda;
        let n = cov.max_n.max(1);
        text.push_str(&format!(
            "# lower bound 2^-2 S^-N = {} (S = {s}, N = {n})\n",
            density_lower_bound(s, n)
        ));
    }
    text.push_str("# x phi\n");
    for (i, v) in d.values().iter().enumerate() {
        text.push_str(&format!("{} {}\n", d.bin_center(i), v));
    }
    emit(&args.output, out, text.as_bytes())?;
    Ok(Status::Ok)
}

pub fn sweep(profile: Profile, args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status, CliError> {
    let threshold = in_range("threshold", args.threshold.unwrap_or(profile.threshold()), 0.0, 1.0)?;
    if !(args.jitter >= 0.0 && args.jitter < 1e-3) {
        return Err(CliError::Usage(format!("--jitter = {} must lie in [0, 1e-3)", args.jitter)));
    }
    let f = load_family(&args.family.family)?;
    let cfg = SweepConfig {
        grid: args.grid as usize,
        n: args.n as usize,
        bins: args.bins as usize,
        threshold,
        orbit: OrbitOptions {
            jitter: args.jitter,
            seed: args.seed,
        },
    };
    let report = typicality::sweep(&f, &cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["a", "ks", "min_density", "max_density", "flags"])?;
    for r in &report.rows {
        w.write_record([
            r.a.to_string(),
            r.ks.to_string(),
            r.min_density.to_string(),
            r.max_density.to_string(),
            r.flags.join(";"),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: None,
        source: e.into_error(),
    })?;
    emit(&args.csv, out, &bytes)?;
    emit(&args.summary, err, &json(&report.summary))?;
    Ok(Status::Ok)
}

#[derive(Debug, Serialize)]
struct Infeasible<'a> {
    family: Option<&'a str>,
    status: &'static str,
    reason: String,
}

#[derive(Debug, Serialize)]
pub struct NestedOutput {
    pub family: Option<String>,
    pub plan: PerturbationPlan,
    pub cases: Vec<ExpansionCase>,
    pub t0: f64,
    pub t1: f64,
    pub report: NestedReport,
}

pub fn nested(args: &NestedArgs, out: &mut dyn Write) -> Result<Status, CliError> {
    let f = load_family(&args.family.family)?;
    let a0 = args.a0.unwrap_or(f.interval().0);
    let attempt = family_constants(&f).and_then(|c| {
        let alpha = args.alpha.unwrap_or(2.0 * c.alpha0);
        perturbed_family(&f, a0, alpha)
    });
    let p = match attempt {
        Ok(p) => p,
        Err(e @ (ergomap::Error::Infeasible(_) | ergomap::Error::CaseUnstable { .. })) => {
            let r = Infeasible {
                family: f.name(),
                status: "hypothesis infeasible",
                reason: e.to_string(),
            };
            emit(&args.output, out, &json(&r))?;
            return Ok(Status::Infeasible);
        }
        Err(e) => return Err(e.into()),
    };
    let window = p.family.interval().1 - a0;
    let t1 = args.t1.unwrap_or(p.plan.epsilon_max / 2.0);
    if !(args.t0 >= 0.0 && args.t0 < t1 && t1 <= window) {
        return Err(CliError::Usage(format!(
            "need 0 <= t0 < t1 <= {window}, got t0 = {}, t1 = {t1}",
            args.t0
        )));
    }
    let m0 = p.family.instantiate(a0 + args.t0)?;
    let m1 = p.family.instantiate(a0 + t1)?;
    let report = check_nested(&m0, &m1, args.depth as usize)?;
    let pass = report.pass;
    let output = NestedOutput {
        family: f.name().map(str::to_string),
        plan: p.plan,
        cases: p.cases,
        t0: args.t0,
        t1,
        report,
    };
    emit(&args.output, out, &json(&output))?;
    Ok(if pass { Status::Ok } else { Status::CheckFailed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchDemo {
    pub branch: usize,
    pub case: ExpansionCase,
    pub image: (f64, f64),
    pub expanded_image: (f64, f64),
    /// Expanded image contains the original and differs from it.
    pub strictly_contains: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpandDemo {
    pub a: f64,
    pub s: f64,
    /// Largest admissible scale for this map.
    pub s0: f64,
    pub branches: Vec<BranchDemo>,
}

/// `T_a` and `E_s T_a` with per-branch images.
pub fn expand_demo(f: &MapFamily, a: f64, s: f64) -> Result<(ExpandDemo, PiecewiseMap, PiecewiseMap), CliError> {
    let t = f.instantiate(a)?;
    let e = expand_map(&t, s)?;
    let branches = t
        .branches()
        .iter()
        .zip(e.map.branches())
        .zip(&e.cases)
        .enumerate()
        .map(|(k, ((b0, b1), &case))| {
            let (image, expanded_image) = (b0.image(), b1.image());
            BranchDemo {
                branch: k + 1,
                case,
                image,
                expanded_image,
                strictly_contains: expanded_image.0 <= image.0
                    && image.1 <= expanded_image.1
                    && expanded_image != image,
            }
        })
        .collect();
    let demo = ExpandDemo {
        a,
        s,
        s0: max_scale(&t),
        branches,
    };
    Ok((demo, t, e.map))
}

pub fn expand(args: &ExpandArgs, out: &mut dyn Write) -> Result<Status, CliError> {
    if !(args.s >= 1.0 && args.s.is_finite()) {
        return Err(CliError::Usage(format!("--s = {} must be at least 1", args.s)));
    }
    let f = load_family(&args.family.family)?;
    let (lo, hi) = f.interval();
    let a = args.a.unwrap_or(0.5 * (lo + hi));
    let (demo, t, e) = expand_demo(&f, a, args.s)?;
    let mut text = render::graph_blocks(&format!("T_a, a = {a}"), &t, &demo, false, args.samples as usize);
    text.push_str("\n\n");
    text.push_str(&render::graph_blocks(
        &format!("E_s T_a, s = {}", args.s),
        &e,
        &demo,
        true,
        args.samples as usize,
    ));
    out.write_all(text.as_bytes())?;
    if let Some(p) = &args.report {
        emit(&Some(p.clone()), out, &json(&demo))?;
    }
    Ok(Status::Ok)
}

pub fn examples(action: &ExamplesAction, out: &mut dyn Write) -> Result<Status, CliError> {
    match action {
        ExamplesAction::List => {
            for (name, description, _) in gallery::GALLERY {
                writeln!(out, "{name}\t{description}")?;
            }
        }
        ExamplesAction::Emit { name } => match gallery::source(name) {
            Some(text) => out.write_all(text.as_bytes())?,
            None => {
                return Err(CliError::Usage(format!(
                    "no bundled family '{name}'; try `ergomap examples list`"
                )))
            }
        },
    }
    Ok(Status::Ok)
}
