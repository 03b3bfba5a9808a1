//! Randomised invariants of partitions, `E_s`, `T̃` and orbit frequencies.

use ergomap::covering::{forward_image, tilde_image};
use ergomap::expand::{expand_branch, ExpansionCase};
use ergomap::interval::IntervalUnion;
use ergomap::typicality::frequency;
use ergomap::{parse, Branch, PiecewiseMap};
use proptest::prelude::*;

/// Monotone branch on `(l, r)` with image `(lo, hi)` and a quadratic warp `c`.
fn warped(l: f64, r: f64, lo: f64, hi: f64, c: f64, increasing: bool) -> String {
    let u = format!("((x - ({l}))/({}))", r - l);
    let u = if increasing { u } else { format!("(1 - {u})") };
    format!("({lo}) + ({})*({u} + ({c})*{u}*(1 - {u}))", hi - lo)
}

/// Three branches whose images contain 0 and which expand by at least 1.1.
fn random_map() -> impl Strategy<Value = PiecewiseMap> {
    (
        0.3..0.9f64,
        0.3..0.9f64,
        proptest::collection::vec((-1.0..-0.05f64, 0.05..1.0f64, -0.5..0.5f64, any::<bool>()), 3),
    )
        .prop_filter_map("branches must expand", |(w0, w1, imgs)| {
            let bps = vec![-1.0, -1.0 + w0, -1.0 + w0 + w1, 1.0];
            if bps[2] > 0.7 {
                return None;
            }
            let mut exprs = Vec::new();
            for (k, &(lo, hi, c, inc)) in imgs.iter().enumerate() {
                let len = bps[k + 1] - bps[k];
                // the warp keeps the slope within (1 - |c|, 1 + |c|) of the chord
                if (hi - lo) / len * (1.0 - c.abs()) < 1.1 {
                    return None;
                }
                exprs.push(parse(&warped(bps[k], bps[k + 1], lo, hi, c, inc)).unwrap());
            }
            PiecewiseMap::new(bps, exprs, 0.0).ok()
        })
}

fn case_branch(case: ExpansionCase) -> impl Strategy<Value = Branch> {
    (0.0..0.99f64, 0.0..0.99f64, -0.5..0.5f64, any::<bool>()).prop_map(move |(p, q, c, inc)| {
        let (lo, hi) = match case {
            ExpansionCase::Interior => (-0.05 - 0.78 * p, 0.05 + 0.78 * q),
            ExpansionCase::Full => (-1.0, 1.0),
            ExpansionCase::TouchesMinusOne => (-1.0, -0.9 + 1.26 * q),
            ExpansionCase::TouchesPlusOne => (0.9 - 1.26 * p, 1.0),
        };
        let e = parse(&warped(-0.4, 0.3, lo, hi, c, inc)).unwrap();
        Branch::new(-0.4, 0.3, e, 0.0).unwrap().0
    })
}

fn any_case() -> impl Strategy<Value = Branch> {
    prop_oneof![
        case_branch(ExpansionCase::Interior),
        case_branch(ExpansionCase::Full),
        case_branch(ExpansionCase::TouchesMinusOne),
        case_branch(ExpansionCase::TouchesPlusOne),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deeper_partitions_refine(t in random_map(), j in 1usize..5) {
        let coarse = t.refine_partition(j).unwrap();
        let fine = t.refine_partition(j + 1).unwrap();
        let edges = fine.edges();
        prop_assert_eq!(edges[0], -1.0);
        prop_assert_eq!(*edges.last().unwrap(), 1.0);
        for c in &fine.cells {
            let k = coarse.locate(c.midpoint()).unwrap();
            let parent = &coarse.cells[k];
            prop_assert!(parent.left <= c.left && c.right <= parent.right);
            prop_assert_eq!(c.word.prefix(j), parent.word.clone());
        }
    }

    #[test]
    fn expansion_cases(b in any_case(), s in 1.0..1.2f64, x in -0.39..0.29f64) {
        let case = ExpansionCase::classify(b.image());
        prop_assert_eq!(&expand_branch(&b, 1.0).unwrap().branch.expr, &b.expr);
        let e = expand_branch(&b, s).unwrap();
        let (scale, _) = case.coefficients(s);
        let d = e.branch.deriv(x);
        prop_assert!((d - scale * b.deriv(x)).abs() <= 1e-12 * d.abs());
        let (lo, hi) = b.image();
        let (elo, ehi) = e.branch.image();
        prop_assert!(elo <= lo + 1e-15 && hi - 1e-15 <= ehi);
        if case != ExpansionCase::Interior && lo <= -1.0 + 1e-10 {
            prop_assert!((elo + 1.0).abs() < 1e-12);
        }
        if case != ExpansionCase::Interior && hi >= 1.0 - 1e-10 {
            prop_assert!((ehi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tilde_image_is_monotone(
        t in random_map(),
        u in proptest::collection::vec((-1.0..1.0f64, 0.0..0.6f64), 1..4),
        extra in (-1.0..1.0f64, 0.0..0.8f64),
    ) {
        let small = IntervalUnion::from_pieces(u.iter().map(|&(a, w)| (a, a + w)).collect());
        let big = small.union(&IntervalUnion::single(extra.0, extra.0 + extra.1));
        let ts = tilde_image(&t, &small);
        prop_assert!(ts.is_subset(&tilde_image(&t, &big), 1e-12));
        prop_assert!(ts.is_subset(&forward_image(&t, &small), 1e-12));
    }

    #[test]
    fn frequencies_add(
        points in proptest::collection::vec(-1.0..1.0f64, 1..500),
        cut in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
    ) {
        let mut v = [cut.0, cut.1, cut.2];
        v.sort_by(f64::total_cmp);
        let n = points.len();
        let on_cut = points.iter().filter(|&&x| x == v[1]).count() as f64 / n as f64;
        let whole = frequency(&points, (v[0], v[2]), n);
        let parts = frequency(&points, (v[0], v[1]), n) + frequency(&points, (v[1], v[2]), n);
        prop_assert!((whole - parts - on_cut).abs() < 1e-12);
    }
}
