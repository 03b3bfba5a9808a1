//! Word sets from pull-back partitions against brute-force itineraries.

use std::collections::BTreeSet;

use ergomap::symbolic::{itinerary, word_set};
use ergomap::{gallery, Word};

const GRID: usize = 100_000;
const DEPTH: usize = 6;

#[test]
fn word_set_matches_sampled_itineraries() {
    for name in ["interior3", "scaled-tiles", "invariant-half"] {
        let f = gallery::load(name).unwrap();
        let (lo, hi) = f.interval();
        let t = f.instantiate(0.5 * (lo + hi)).unwrap();
        let exact = word_set(&t, DEPTH).unwrap();
        let mut sampled: BTreeSet<Word> = BTreeSet::new();
        for k in 0..GRID {
            let x = -1.0 + 2.0 * (k as f64 + 0.5) / GRID as f64;
            if let Ok(w) = itinerary(&t, x, DEPTH) {
                sampled.insert(w);
            }
        }
        assert!(sampled.is_subset(&exact.words), "{name}: sampled word outside the word set");
        // every cylinder wider than two grid steps contains a sample
        let spacing = 2.0 / GRID as f64;
        let p = t.refine_partition(DEPTH).unwrap();
        for c in p.cells.iter().filter(|c| c.len() > 2.0 * spacing) {
            assert!(sampled.contains(&c.word), "{name}: cylinder {} not sampled", c.word);
        }
    }
}
