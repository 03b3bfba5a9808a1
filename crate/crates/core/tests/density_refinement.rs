use ergomap::density::{invariant_density, density_lower_bound, ulam_matrix};
use ergomap::gallery;

#[test]
fn doubling_density_is_flat() {
    let t = gallery::load("doubling").unwrap().instantiate(0.0).unwrap();
    let m = ulam_matrix(&t, 1 << 12).unwrap();
    let d = ergomap::density::stationary_density(&m).unwrap();
    let (lo, hi) = d.bounds();
    assert!((lo - 0.5).abs() < 1e-3 && (hi - 0.5).abs() < 1e-3);
    assert!(d.fixed_point_residual(&m) < 1e-10);
    assert!(density_lower_bound(t.bounds().big_lambda, 1) <= lo);
}

#[test]
fn refining_bins_changes_little() {
    for name in ["interior3", "scaled-tiles"] {
        let f = gallery::load(name).unwrap();
        let (lo, hi) = f.interval();
        let t = f.instantiate(0.5 * (lo + hi)).unwrap();
        let coarse = invariant_density(&t, 1 << 11).unwrap();
        let fine = invariant_density(&t, 1 << 12).unwrap();
        let d = coarse.l1_distance(&fine);
        assert!(d < 5e-3, "{name}: L1 distance {d}");
        assert!((fine.mass() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn matrix_is_column_stochastic() {
    let f = gallery::load("interior3").unwrap();
    let m = ulam_matrix(&f.instantiate(0.01).unwrap(), 512).unwrap();
    for s in m.column_sums() {
        assert!((s - 1.0).abs() < 1e-12);
    }
}
