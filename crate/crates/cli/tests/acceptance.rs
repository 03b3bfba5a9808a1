//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use ergomap::covering::{forward_image, tilde_image, weakly_covering_n, DEFAULT_N_MAX};
use ergomap::density::{density_lower_bound, stationary_density, ulam_matrix};
use ergomap::expand::{compute_constants, expand_branch, expand_map, family_constants, perturbed_family, ExpansionCase};
use ergomap::gallery::{self, scaled_family_check, scaled_tiles_template};
use ergomap::interval::IntervalUnion;
use ergomap::symbolic::{check_nested, CONTAINMENT_SLACK};
use ergomap::typicality::{sweep, SweepConfig};
use ergomap::{parse, Branch, Error, PiecewiseMap};
use ergomap_cli::expand_demo;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// expansion cases
const CASE_BRANCHES: usize = 200;
const CASE_SCALES: [f64; 4] = [1.0, 1.05, 1.1, 1.2];
const ENDPOINT_TOL: f64 = 1e-12;
const SCALING_REL_TOL: f64 = 1e-12;
const NESTING_SLACK: f64 = 1e-15;
const CASE_BUDGET: Duration = Duration::from_secs(5);
// expand-demo
const DEMO_SCALE: f64 = 1.2;
const DEMO_BUDGET: Duration = Duration::from_secs(1);
// constants
const ALPHA0_EXPECTED: f64 = 4.7059;
const ALPHA0_TOL: f64 = 1e-3;
// nested
const NESTED_DEPTH: usize = 12;
const NESTED_SLACK: f64 = 1e-10;
const NESTED_BUDGET: Duration = Duration::from_secs(60);
const INFEASIBLE_EXIT: i32 = 5;
// density
const DENSITY_BINS: usize = 1 << 12;
const DENSITY_SUP_TOL: f64 = 1e-3;
const RESIDUAL_TOL: f64 = 1e-10;
const DENSITY_BUDGET: Duration = Duration::from_secs(30);
// covering
const TILDE_DEPTH: usize = 8;
const TILDE_SCALES: [f64; 2] = [1.0, 1.1];
const SET_SLACK: f64 = 1e-12;
const COVERING_BUDGET: Duration = Duration::from_secs(10);
// sweeps
const SWEEP_GRID: usize = 200;
const SWEEP_N: usize = 200_000;
const SWEEP_BINS: usize = 1 << 12;
const KS_THRESHOLD: f64 = 0.02;
const DOUBLING_FRACTION: f64 = 0.99;
const SCALED_FRACTION: f64 = 0.95;
const SWEEP_BUDGET: Duration = Duration::from_secs(600);
// derivatives
const DERIV_PAIRS: usize = 500;
const DERIV_MAX_J: usize = 10;
const DERIV_STEP: f64 = 1e-6;
/// Parameters within this fraction of a cell width from its ends are skipped.
const DERIV_BOUNDARY_GAP: f64 = 0.05;
const DERIV_REL_TOL: f64 = 1e-5;
const DERIV_BUDGET: Duration = Duration::from_secs(30);
// scaled-family check
const SCALED_DELTA: f64 = 0.4;
const REQUIRED_INF_DERIVATIVE: f64 = 3.5;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(budget: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {t:.2?}, budget {budget:?}"))
}

fn warped(l: f64, r: f64, lo: f64, hi: f64, c: f64, increasing: bool) -> Branch {
    let u = format!("((x - ({l}))/({}))", r - l);
    let u = if increasing { u } else { format!("(1 - {u})") };
    let e = parse(&format!("({lo}) + ({})*({u} + ({c})*{u}*(1 - {u}))", hi - lo)).unwrap();
    Branch::new(l, r, e, 0.0).unwrap().0
}

fn random_branch(rng: &mut ChaCha8Rng, case: ExpansionCase) -> Branch {
    let (p, q): (f64, f64) = (rng.gen(), rng.gen());
    // admissible up to s = 1.2 in every case
    let (lo, hi) = match case {
        ExpansionCase::Interior => (-0.01 - 0.82 * p, 0.01 + 0.82 * q),
        ExpansionCase::Full => (-1.0, 1.0),
        ExpansionCase::TouchesMinusOne => (-1.0, -0.95 + 1.3 * q),
        ExpansionCase::TouchesPlusOne => (0.95 - 1.3 * p, 1.0),
    };
    let l: f64 = rng.gen_range(-1.0..0.5);
    let r = l + rng.gen_range(0.05..(1.0 - l).min(0.5));
    warped(l, r, lo, hi, rng.gen_range(-0.6..0.6), rng.gen())
}

fn expansion_cases() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = [
        ExpansionCase::Interior,
        ExpansionCase::Full,
        ExpansionCase::TouchesMinusOne,
        ExpansionCase::TouchesPlusOne,
    ];
    let mut worst_scaling: f64 = 0.0;
    let mut worst_endpoint: f64 = 0.0;
    for case in cases {
        for i in 0..CASE_BRANCHES {
            let b = random_branch(&mut rng, case);
            ensure(ExpansionCase::classify(b.image()) == case, || format!("{case:?} #{i} misclassified"))?;
            let id = expand_branch(&b, 1.0).map_err(|e| e.to_string())?;
            ensure(id.branch.expr == b.expr, || format!("{case:?} #{i}: E_1 changed the expression"))?;
            let xs: Vec<f64> = (0..16).map(|_| rng.gen_range(b.left..b.right)).collect();
            for &x in &xs {
                ensure(id.branch.eval(x).to_bits() == b.eval(x).to_bits(), || format!("{case:?} #{i}: E_1 f != f"))?;
            }
            let mut prev = b.image();
            for &s in &CASE_SCALES {
                let e = expand_branch(&b, s).map_err(|e| format!("{case:?} #{i} s = {s}: {e}"))?;
                let img = e.branch.image();
                ensure(img.0 <= prev.0 + NESTING_SLACK && prev.1 - NESTING_SLACK <= img.1, || {
                    format!("{case:?} #{i}: image at s = {s} {img:?} misses {prev:?}")
                })?;
                prev = img;
                if b.image().0 <= -1.0 {
                    worst_endpoint = worst_endpoint.max((img.0 + 1.0).abs());
                }
                if b.image().1 >= 1.0 {
                    worst_endpoint = worst_endpoint.max((img.1 - 1.0).abs());
                }
                let (scale, _) = case.coefficients(s);
                for &x in &xs {
                    let d = e.branch.deriv(x);
                    worst_scaling = worst_scaling.max((d - scale * b.deriv(x)).abs() / d.abs());
                }
            }
        }
    }
    ensure(worst_endpoint < ENDPOINT_TOL, || format!("endpoint drift {worst_endpoint:e}"))?;
    ensure(worst_scaling < SCALING_REL_TOL, || format!("derivative scaling error {worst_scaling:e}"))?;
    within(CASE_BUDGET, start)?;
    Ok(format!(
        "{} branches x {} scales; endpoint drift {worst_endpoint:.1e}, scaling error {worst_scaling:.1e}",
        4 * CASE_BRANCHES,
        CASE_SCALES.len()
    ))
}

/// Branch images parsed back from the emitted graph data.
fn emitted_images(text: &str) -> Vec<Vec<(String, f64, f64)>> {
    text.split("\n\n\n")
        .map(|block| {
            block
                .lines()
                .filter_map(|l| l.strip_prefix("# branch "))
                .map(|l| {
                    let f: Vec<&str> = l.split_whitespace().collect();
                    (f[1].to_string(), f[3].parse().unwrap(), f[4].parse().unwrap())
                })
                .collect()
        })
        .collect()
}

fn expand_demo_graphs() -> Outcome {
    let start = Instant::now();
    let f = gallery::load("four-cases").map_err(|e| e.to_string())?;
    let (lo, hi) = f.interval();
    let (demo, _, _) = expand_demo(&f, 0.5 * (lo + hi), DEMO_SCALE).map_err(|e| e.to_string())?;
    for b in &demo.branches {
        let expected = b.case != ExpansionCase::Full;
        ensure(b.strictly_contains == expected, || format!("branch {}: {:?}", b.branch, b))?;
        if !expected {
            ensure(b.image == b.expanded_image, || format!("full branch {} moved", b.branch))?;
        }
    }
    let o = Command::new(env!("CARGO_BIN_EXE_ergomap"))
        .args(["expand-demo", "four-cases", "--s", &DEMO_SCALE.to_string()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || "expand-demo failed".into())?;
    let blocks = emitted_images(&String::from_utf8_lossy(&o.stdout));
    ensure(blocks.len() == 2 && blocks[0].len() == blocks[1].len(), || "expected two graph sets".into())?;
    let mut strict = 0;
    for (orig, exp) in blocks[0].iter().zip(&blocks[1]) {
        let contains = exp.1 <= orig.1 && orig.2 <= exp.2;
        let differs = exp.1 < orig.1 || orig.2 < exp.2;
        ensure(contains && (differs == (orig.0 != "full")), || format!("emitted images {orig:?} -> {exp:?}"))?;
        strict += differs as usize;
    }
    within(DEMO_BUDGET, start)?;
    Ok(format!(
        "s = {DEMO_SCALE}: {strict} of {} branch images strictly grow, the full branch is fixed",
        blocks[0].len()
    ))
}

fn constants() -> Outcome {
    let c = compute_constants(4.0, 4.0, 1.0, 0.0, 0.9, 0.0).map_err(|e| e.to_string())?;
    ensure((c.alpha0 - ALPHA0_EXPECTED).abs() <= ALPHA0_TOL, || format!("alpha0 = {}", c.alpha0))?;
    let infeasible = compute_constants(2.0, 2.0, 1.0, 0.0, 0.9, 0.0);
    ensure(matches!(infeasible, Err(Error::Infeasible(_))), || format!("lambda = 2 gave {infeasible:?}"))?;
    Ok(format!("alpha0 = {:.6}; lambda = 2 is infeasible", c.alpha0))
}

fn nested() -> Outcome {
    let start = Instant::now();
    let f = gallery::load("interior3").map_err(|e| e.to_string())?;
    let a0 = f.interval().0;
    let c = family_constants(&f).map_err(|e| e.to_string())?;
    let p = perturbed_family(&f, a0, 2.0 * c.alpha0).map_err(|e| e.to_string())?;
    let t1 = p.plan.epsilon_max / 2.0;
    let m0 = p.family.instantiate(a0).map_err(|e| e.to_string())?;
    let m1 = p.family.instantiate(a0 + t1).map_err(|e| e.to_string())?;
    ensure(CONTAINMENT_SLACK == NESTED_SLACK, || "containment slack changed".into())?;
    let r = check_nested(&m0, &m1, NESTED_DEPTH).map_err(|e| e.to_string())?;
    ensure(r.words_included, || format!("missing words {:?}", r.missing_words))?;
    ensure(r.images_contained, || format!("containment violations {:?}", r.violations))?;
    within(NESTED_BUDGET, start)?;
    let o = Command::new(env!("CARGO_BIN_EXE_ergomap"))
        .args(["nested", "doubling"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.code() == Some(INFEASIBLE_EXIT), || format!("doubling exit {:?}", o.status.code()))?;
    let last = r.levels.last().unwrap();
    Ok(format!(
        "interior3 (lambda = {:.3}), depth {NESTED_DEPTH}: {} words inside {}; doubling exits {INFEASIBLE_EXIT} ({:.1?})",
        c.lambda,
        last.words0,
        last.words1,
        start.elapsed()
    ))
}

fn density() -> Outcome {
    let start = Instant::now();
    let t = gallery::load("doubling").map_err(|e| e.to_string())?.instantiate(0.0).map_err(|e| e.to_string())?;
    let m = ulam_matrix(&t, DENSITY_BINS).map_err(|e| e.to_string())?;
    let d = stationary_density(&m).map_err(|e| e.to_string())?;
    let sup = d.values().iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    ensure(sup < DENSITY_SUP_TOL, || format!("sup |phi - 0.5| = {sup:e}"))?;
    let res = d.fixed_point_residual(&m);
    ensure(res < RESIDUAL_TOL, || format!("residual {res:e}"))?;
    let n = (0..t.branch_count())
        .map(|k| weakly_covering_n(&t, k, DEFAULT_N_MAX).map(|r| r.n))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .max()
        .unwrap();
    let bound = density_lower_bound(t.bounds().big_lambda, n);
    ensure(n == 1 && bound == 0.125, || format!("N = {n}, bound = {bound}"))?;
    let min = d.bounds().0;
    ensure(bound <= min, || format!("bound {bound} exceeds min {min}"))?;
    within(DENSITY_BUDGET, start)?;
    Ok(format!("sup error {sup:.1e}, residual {res:.1e}, bound {bound} <= min {min}"))
}

fn gallery_maps() -> Result<Vec<(&'static str, PiecewiseMap)>, String> {
    gallery::names()
        .map(|name| {
            let f = gallery::load(name).map_err(|e| e.to_string())?;
            let (lo, hi) = f.interval();
            Ok((name, f.instantiate(0.5 * (lo + hi)).map_err(|e| e.to_string())?))
        })
        .collect()
}

fn test_sets(t: &PiecewiseMap) -> Vec<IntervalUnion> {
    let b = t.branches();
    let mut sets: Vec<IntervalUnion> = b.iter().map(|c| IntervalUnion::single(c.left, c.right)).collect();
    for w in b.windows(2) {
        sets.push(IntervalUnion::single(w[0].left, w[1].right));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..16 {
        let pieces = (0..3)
            .map(|_| {
                let x: f64 = rng.gen_range(-1.0..1.0);
                (x, x + rng.gen_range(0.0..0.8))
            })
            .collect();
        sets.push(IntervalUnion::from_pieces(pieces));
    }
    sets
}

fn covering() -> Outcome {
    let start = Instant::now();
    let maps = gallery_maps()?;
    let mut full_maps = Vec::new();
    for (name, t) in &maps {
        let full = t.branches().iter().all(|b| ExpansionCase::classify(b.image()) == ExpansionCase::Full);
        if full {
            for k in 0..t.branch_count() {
                let r = weakly_covering_n(t, k, DEFAULT_N_MAX).map_err(|e| format!("{name}: {e}"))?;
                ensure(r.n == 1, || format!("{name} cell {k}: N = {}", r.n))?;
            }
            full_maps.push(*name);
        }
    }
    ensure(!full_maps.is_empty(), || "no full-branch gallery map".into())?;
    let (_, half) = maps.iter().find(|m| m.0 == "invariant-half").unwrap();
    let neg = (0..half.branch_count()).map(|k| weakly_covering_n(half, k, DEFAULT_N_MAX)).find_map(Result::err);
    ensure(matches!(neg, Some(Error::NotCoveringWithin { .. })), || format!("negative control gave {neg:?}"))?;
    let mut comparisons = 0;
    for (name, t) in &maps {
        for u in test_sets(t) {
            let (mut tilde, mut image) = (u.clone(), u.clone());
            for n in 1..=TILDE_DEPTH {
                tilde = tilde_image(t, &tilde);
                image = forward_image(t, &image);
                ensure(tilde.is_subset(&image, SET_SLACK), || format!("{name}: tilde image escapes at n = {n}"))?;
                comparisons += 1;
            }
        }
        let e0 = expand_map(t, TILDE_SCALES[0]).map_err(|e| format!("{name}: {e}"))?;
        let e1 = expand_map(t, TILDE_SCALES[1]).map_err(|e| format!("{name}: {e}"))?;
        for u in test_sets(t) {
            let (small, big) = (tilde_image(&e0.map, &u), tilde_image(&e1.map, &u));
            ensure(small.is_subset(&big, SET_SLACK), || format!("{name}: tilde image shrinks under E_s"))?;
        }
    }
    within(COVERING_BUDGET, start)?;
    Ok(format!(
        "N = 1 on {}; invariant-half not covering; {comparisons} tilde/forward comparisons",
        full_maps.join(", ")
    ))
}

fn typicality() -> Outcome {
    let start = Instant::now();
    let cfg = SweepConfig {
        grid: SWEEP_GRID,
        n: SWEEP_N,
        bins: SWEEP_BINS,
        threshold: KS_THRESHOLD,
        ..SweepConfig::default()
    };
    let mut parts = Vec::new();
    for (name, need) in [("doubling", DOUBLING_FRACTION), ("scaled-tiles", SCALED_FRACTION)] {
        let f = gallery::load(name).map_err(|e| e.to_string())?;
        let s = sweep(&f, &cfg).map_err(|e| e.to_string())?.summary;
        ensure(s.fraction_below >= need, || format!("{name}: {} below threshold", s.fraction_below))?;
        parts.push(format!("{name} {:.1}% (median KS {:.4})", 100.0 * s.fraction_below, s.median_ks));
    }
    within(SWEEP_BUDGET, start)?;
    Ok(format!("{} ({:.1?})", parts.join(", "), start.elapsed()))
}

fn derivatives() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (name, seed) in [("interior3", 8u64), ("scaled-tiles", 9)] {
        let f = gallery::load(name).map_err(|e| e.to_string())?;
        let (lo, hi) = f.interval();
        let parts = (0..=DERIV_MAX_J)
            .map(|j| f.param_partition(j))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut done = 0;
        while done < DERIV_PAIRS {
            let j = rng.gen_range(0..=DERIV_MAX_J);
            let a = rng.gen_range(lo..hi);
            let cell = parts[j].locate(a).ok_or("parameter outside the partition")?;
            let dist = (a - cell.lo).min(cell.hi - a);
            if dist < DERIV_BOUNDARY_GAP * (cell.hi - cell.lo) {
                continue;
            }
            let h = DERIV_STEP.min(dist / 4.0);
            let xi = |a: f64| f.xi(a, j).map_err(|e| e.to_string());
            let fd = (8.0 * (xi(a + h)? - xi(a - h)?) - (xi(a + 2.0 * h)? - xi(a - 2.0 * h)?)) / (12.0 * h);
            let exact = f.xi_deriv(a, j).map_err(|e| e.to_string())?;
            let rel = (exact - fd).abs() / fd.abs();
            ensure(rel < DERIV_REL_TOL, || format!("{name}: j = {j}, a = {a}: {exact} vs {fd}"))?;
            worst = worst.max(rel);
            done += 1;
        }
    }
    within(DERIV_BUDGET, start)?;
    Ok(format!(
        "{DERIV_PAIRS} pairs on each of 2 families, worst relative error {worst:.1e} ({:.1?})",
        start.elapsed()
    ))
}

fn scaled_family() -> Outcome {
    let r = scaled_family_check(&scaled_tiles_template(), SCALED_DELTA, gallery::SCALED_TILES_INTERVAL)
        .map_err(|e| e.to_string())?;
    ensure(r.pass, || format!("{r:?}"))?;
    ensure(r.required_inf_derivative == REQUIRED_INF_DERIVATIVE, || {
        format!("required inf |T_a'| = {}", r.required_inf_derivative)
    })?;
    ensure(r.margin > 0.0, || format!("margin {}", r.margin))?;
    Ok(format!(
        "delta = 2/5: requires inf |T_a'| > {}, observed {}, margin {}, witness tile {}",
        r.required_inf_derivative,
        r.observed_inf_derivative,
        r.margin,
        r.witness.map_or(0, |w| w + 1)
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("expansion cases", expansion_cases),
        ("expand-demo graphs", expand_demo_graphs),
        ("perturbation constants", constants),
        ("nested symbolic dynamics", nested),
        ("doubling density", density),
        ("weak covering", covering),
        ("typicality sweeps", typicality),
        ("parameter derivatives", derivatives),
        ("scaled-family check", scaled_family),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let t = start.elapsed();
        match outcome {
            Ok(msg) => println!("PASS {}. {name}: {msg} [{t:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {}. {name}: {msg} [{t:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
