use std::time::Instant;

use ergomap::gallery;
use ergomap::typicality::{sweep, SweepConfig};

fn run(name: &str, grid: usize) -> ergomap::typicality::SweepSummary {
    let f = gallery::load(name).unwrap();
    let start = Instant::now();
    let r = sweep(&f, &SweepConfig { grid, ..SweepConfig::default() }).unwrap();
    eprintln!("{name}: {:?} in {:?}", r.summary, start.elapsed());
    r.summary
}

#[test]
fn doubling_sweep_is_typical() {
    let s = run("doubling", 40);
    assert!(s.fraction_below >= 0.99);
}

#[test]
fn scaled_tiles_sweep_is_typical() {
    let s = run("scaled-tiles", 40);
    assert!(s.fraction_below >= 0.95);
}
