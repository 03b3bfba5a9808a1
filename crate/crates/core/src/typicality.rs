//! Birkhoff frequencies along the parametrised orbit `ξ_j(a)` and their
//! comparison with the invariant density across a parameter grid.
//!
//! Floating-point orbits of maps with dyadic slopes collapse onto breakpoints
//! within about fifty steps, so each step adds a seeded uniform jitter of
//! size [`DEFAULT_JITTER`]. The noisy orbit shadows a true orbit of `T_a`;
//! seeds are derived from `a`, which keeps every run reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::covering::{check_weak_covering, DEFAULT_N_MAX};
use crate::density::{invariant_density, UlamDensity};
use crate::error::{Error, Result};
use crate::family::MapFamily;
use crate::map_model::{PiecewiseMap, BREAKPOINT_TOL};

pub const DEFAULT_JITTER: f64 = 1e-14;
pub const DEFAULT_SEED: u64 = 0x5eed_0f_0b17;
pub const DEFAULT_N: usize = 200_000;
pub const DEFAULT_BINS: usize = 4096;
pub const DEFAULT_THRESHOLD: f64 = 0.02;
pub const DEFAULT_LIMSUP_SLACK: f64 = 0.01;
/// Densities whose minimum falls below this make the KS reference unreliable.
pub const UNRELIABLE_MIN: f64 = 1e-6;

/// Noise model for simulated orbits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitOptions {
    pub jitter: f64,
    pub seed: u64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            jitter: DEFAULT_JITTER,
            seed: DEFAULT_SEED,
        }
    }
}

/// Orbit `x_1, …, x_n` of `T` from `x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub points: Vec<f64>,
    /// Step at which a second breakpoint hit ended the orbit.
    pub truncated_at: Option<usize>,
    pub perturbations: usize,
}

fn rng_for(opts: &OrbitOptions, a: f64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(opts.seed ^ a.to_bits().rotate_left(17))
}

/// Iterate `T` for `n` steps with jitter; a breakpoint hit nudges the point
/// by `2·tol` once and ends the orbit the second time.
pub fn simulate(t: &PiecewiseMap, x0: f64, n: usize, opts: &OrbitOptions, rng: &mut ChaCha8Rng) -> Orbit {
    let mut points = Vec::with_capacity(n);
    let mut x = x0;
    let mut perturbations = 0;
    let mut step = 0;
    while step < n {
        match t.eval_map(x) {
            Ok(y) => {
                let z = y + opts.jitter * rng.gen_range(-1.0..1.0);
                x = if z > -1.0 && z < 1.0 { z } else { y };
                points.push(x);
                step += 1;
            }
            Err(_) if perturbations == 0 => {
                perturbations += 1;
                let nudge = 2.0 * BREAKPOINT_TOL;
                x = if x + nudge < 1.0 { x + nudge } else { x - nudge };
            }
            Err(_) => {
                return Orbit {
                    points,
                    truncated_at: Some(step),
                    perturbations,
                }
            }
        }
    }
    Orbit {
        points,
        truncated_at: None,
        perturbations,
    }
}

/// `[ξ_1(a), …, ξ_n(a)]` with jitter.
pub fn xi_orbit_noisy(family: &MapFamily, a: f64, n: usize, opts: &OrbitOptions) -> Result<Orbit> {
    let t = family.instantiate(a)?;
    let mut rng = rng_for(opts, a);
    Ok(simulate(&t, family.point_at(a), n, opts, &mut rng))
}

/// Fraction of `points[..n]` inside the open interval `b`, normalised by `n`.
pub fn frequency(points: &[f64], b: (f64, f64), n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let hits = points.iter().take(n).filter(|&&x| b.0 < x && x < b.1).count();
    hits as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Birkhoff {
    pub value: f64,
    pub n: usize,
    pub truncated_at: Option<usize>,
}

/// `F_n(a) = (1/n) Σ_{j=1}^{n} χ_B(ξ_j(a))`.
pub fn birkhoff_f(family: &MapFamily, a: f64, b: (f64, f64), n: usize, opts: &OrbitOptions) -> Result<Birkhoff> {
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    let orbit = xi_orbit_noisy(family, a, n, opts)?;
    Ok(Birkhoff {
        value: frequency(&orbit.points, b, n),
        n,
        truncated_at: orbit.truncated_at,
    })
}

/// Counts of points per equal bin of `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bins: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn from_points(points: &[f64], bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        for &x in points {
            let i = (((x + 1.0) * 0.5 * bins as f64).floor() as isize).clamp(0, bins as isize - 1);
            counts[i as usize] += 1;
        }
        Histogram {
            bins,
            counts,
            total: points.len() as u64,
        }
    }
}

/// Largest gap between the empirical and the density CDF on the histogram's
/// bin edges.
pub fn ks_distance(h: &Histogram, d: &UlamDensity) -> f64 {
    if h.total == 0 {
        return 1.0;
    }
    let mut acc = 0u64;
    let mut best: f64 = 0.0;
    for i in 0..h.bins {
        acc += h.counts[i];
        let edge = -1.0 + 2.0 * (i + 1) as f64 / h.bins as f64;
        let gap = (acc as f64 / h.total as f64 - d.cdf(edge)).abs();
        best = best.max(gap);
    }
    best
}

/// Options for a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    pub grid: usize,
    pub n: usize,
    pub bins: usize,
    pub threshold: f64,
    pub orbit: OrbitOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid: 200,
            n: DEFAULT_N,
            bins: DEFAULT_BINS,
            threshold: DEFAULT_THRESHOLD,
            orbit: OrbitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub a: f64,
    pub ks: f64,
    pub min_density: f64,
    pub max_density: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub parameters: usize,
    pub below_threshold: usize,
    pub fraction_below: f64,
    pub median_ks: f64,
    pub max_ks: f64,
    pub threshold: f64,
    pub n: usize,
    pub burn_in: usize,
    pub bins: usize,
    pub failed: usize,
    pub reference_unreliable: usize,
    pub not_weakly_covering: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub summary: SweepSummary,
    pub rows: Vec<SweepRow>,
}

/// `⌈√n⌉` iterates dropped before histogramming.
pub fn burn_in(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

fn sweep_one(family: &MapFamily, a: f64, cfg: &SweepConfig) -> SweepRow {
    let mut flags = Vec::new();
    let fail = |flags: Vec<String>| SweepRow {
        a,
        ks: f64::NAN,
        min_density: f64::NAN,
        max_density: f64::NAN,
        flags,
    };
    let t = match family.instantiate(a) {
        Ok(t) => t,
        Err(e) => return fail(vec![format!("error: {e}")]),
    };
    if check_weak_covering(&t, DEFAULT_N_MAX).is_err() {
        flags.push("not-weakly-covering".to_string());
    }
    let density = match invariant_density(&t, cfg.bins) {
        Ok(d) => d,
        Err(e) => {
            flags.push(format!("error: {e}"));
            return fail(flags);
        }
    };
    let (min_density, max_density) = density.bounds();
    if min_density < UNRELIABLE_MIN {
        flags.push("reference-unreliable".to_string());
    }
    let burn = burn_in(cfg.n);
    let mut rng = rng_for(&cfg.orbit, a);
    let orbit = simulate(&t, family.point_at(a), cfg.n + burn, &cfg.orbit, &mut rng);
    if orbit.perturbations > 0 {
        flags.push("perturbed".to_string());
    }
    if let Some(k) = orbit.truncated_at {
        flags.push(format!("truncated@{k}"));
    }
    let kept = orbit.points.get(burn..).unwrap_or(&[]);
    let hist = Histogram::from_points(kept, cfg.bins);
    SweepRow {
        a,
        ks: ks_distance(&hist, &density),
        min_density,
        max_density,
        flags,
    }
}

/// KS distance between the orbit of `X(a)` and the Ulam density of `T_a` at
/// `cfg.grid` midpoint parameters.
pub fn sweep(family: &MapFamily, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.grid == 0 || cfg.n == 0 || cfg.bins < 2 {
        return Err(Error::Precondition("grid, n and bins must be positive".into()));
    }
    let rows: Vec<SweepRow> = family
        .midpoint_grid(cfg.grid)
        .par_iter()
        .map(|&a| sweep_one(family, a, cfg))
        .collect();
    let mut ks: Vec<f64> = rows.iter().map(|r| r.ks).filter(|k| k.is_finite()).collect();
    ks.sort_by(f64::total_cmp);
    let median_ks = if ks.is_empty() { f64::NAN } else { ks[ks.len() / 2] };
    let below = rows.iter().filter(|r| r.ks < cfg.threshold).count();
    let count = |flag: &str| rows.iter().filter(|r| r.flags.iter().any(|f| f == flag)).count();
    let summary = SweepSummary {
        parameters: rows.len(),
        below_threshold: below,
        fraction_below: below as f64 / rows.len() as f64,
        median_ks,
        max_ks: ks.last().copied().unwrap_or(f64::NAN),
        threshold: cfg.threshold,
        n: cfg.n,
        burn_in: burn_in(cfg.n),
        bins: cfg.bins,
        failed: rows.iter().filter(|r| !r.ks.is_finite()).count(),
        reference_unreliable: count("reference-unreliable"),
        not_weakly_covering: count("not-weakly-covering"),
    };
    Ok(SweepReport { summary, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimsupRow {
    pub b: (f64, f64),
    pub n: usize,
    pub f_n: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimsupReport {
    pub a: f64,
    pub c: f64,
    pub slack: f64,
    pub rows: Vec<LimsupRow>,
    pub pass: bool,
}

/// Record `F_n(a)` for each interval and `n` and test `F_n ≤ C|B| + slack`.
pub fn limsup_bound_check(
    family: &MapFamily,
    a: f64,
    intervals: &[(f64, f64)],
    ns: &[usize],
    c: f64,
    slack: f64,
    opts: &OrbitOptions,
) -> Result<LimsupReport> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let orbit = xi_orbit_noisy(family, a, n_max, opts)?;
    let mut rows = Vec::with_capacity(intervals.len() * ns.len());
    for &b in intervals {
        for &n in ns {
            let f_n = frequency(&orbit.points, b, n);
            let bound = c * (b.1 - b.0).max(0.0) + slack;
            rows.push(LimsupRow {
                b,
                n,
                f_n,
                bound,
                ok: f_n <= bound,
            });
        }
    }
    Ok(LimsupReport {
        a,
        c,
        slack,
        pass: rows.iter().all(|r| r.ok),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::family::{constant, MapSpec};

    fn doubling_family() -> MapFamily {
        MapFamily::new(MapSpec {
            name: None,
            domain: (-1.0, 1.0),
            param_interval: (-0.95, 0.95),
            breakpoints: vec![constant(-1.0), constant(0.0), constant(1.0)],
            branches: vec![parse("2*x + 1").unwrap(), parse("2*x - 1").unwrap()],
            point_x: parse("a").unwrap(),
            lipschitz: None,
        })
        .unwrap()
    }

    #[test]
    fn birkhoff_trivial_intervals() {
        let f = doubling_family();
        let o = OrbitOptions::default();
        assert_eq!(birkhoff_f(&f, 0.3, (-1.0, 1.0), 1000, &o).unwrap().value, 1.0);
        assert_eq!(birkhoff_f(&f, 0.3, (0.2, 0.2), 1000, &o).unwrap().value, 0.0);
        let half = birkhoff_f(&f, 0.3, (0.0, 1.0), 100_000, &o).unwrap().value;
        assert!((half - 0.5).abs() < 0.01, "{half}");
    }

    #[test]
    fn ks_point_mass_and_identity() {
        let d = UlamDensity {
            bins: 8,
            weights: vec![0.125; 8],
            iterations: 0,
        };
        let h = Histogram::from_points(&[0.01; 10], 8);
        assert!((ks_distance(&h, &d) - 0.5).abs() < 1e-12);
        let same = Histogram {
            bins: 8,
            counts: vec![1; 8],
            total: 8,
        };
        assert!(ks_distance(&same, &d) < 1e-15);
    }

    #[test]
    fn deterministic() {
        let f = doubling_family();
        let o = OrbitOptions::default();
        let x = xi_orbit_noisy(&f, 0.25, 500, &o).unwrap();
        let y = xi_orbit_noisy(&f, 0.25, 500, &o).unwrap();
        assert_eq!(x, y);
        assert!(x.truncated_at.is_none());
    }
}
