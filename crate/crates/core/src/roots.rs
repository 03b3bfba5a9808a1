//! Bracketed root solving used for monotone branch inverses and for the
//! parameter partitions.

/// Bisection stops once the bracket is narrower than this.
pub const BISECTION_WIDTH: f64 = 1e-13;

const MAX_BISECTIONS: usize = 200;

/// Root of a continuous `g` on `[lo, hi]` given a sign change.
///
/// Bisects to [`BISECTION_WIDTH`], then applies `newton_steps` Newton
/// corrections using `dg`, each clamped to the final bracket. Returns
/// `None` when `g(lo)` and `g(hi)` have the same strict sign.
pub fn bracketed_root<G, D>(g: G, dg: D, lo: f64, hi: f64, newton_steps: usize) -> Option<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    let mut g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo == 0.0 {
        return Some(lo);
    }
    if g_hi == 0.0 {
        return Some(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return None;
    }
    let mut iters = 0;
    while hi - lo > BISECTION_WIDTH && iters < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return Some(mid);
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..newton_steps {
        let slope = dg(x);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = x - g(x) / slope;
        if !next.is_finite() {
            break;
        }
        x = next.clamp(lo, hi);
    }
    Some(x)
}

/// All sign-change roots of `g` on `[lo, hi]` found by scanning `samples`
/// equal subintervals and bisecting each bracket. Roots are returned sorted.
pub fn scan_roots<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let samples = samples.max(1);
    let step = (hi - lo) / samples as f64;
    let mut roots = Vec::new();
    let mut x0 = lo;
    let mut g0 = g(x0);
    for k in 1..=samples {
        let x1 = if k == samples { hi } else { lo + step * k as f64 };
        let g1 = g(x1);
        if g0 == 0.0 {
            if k > 1 {
                roots.push(x0);
            }
        } else if g1 != 0.0 && g0.signum() != g1.signum() {
            if let Some(r) = bracketed_root(&g, |_| 0.0, x0, x1, 0) {
                roots.push(r);
            }
        }
        x0 = x1;
        g0 = g1;
    }
    roots
}
