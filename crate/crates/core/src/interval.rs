//! Finite unions of disjoint open subintervals of `[-1, 1]`.

use serde::Serialize;

/// Pieces separated by a gap no larger than this are merged.
pub const MERGE_TOL: f64 = 1e-12;

/// Sorted, pairwise disjoint open intervals.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IntervalUnion {
    pieces: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `(-1, 1)`
    pub fn full() -> Self {
        Self::single(-1.0, 1.0)
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        Self::from_pieces(vec![(lo, hi)])
    }

    /// Normalize arbitrary intervals: clip to `[-1, 1]`, drop empties, sort, merge.
    pub fn from_pieces(mut raw: Vec<(f64, f64)>) -> Self {
        for p in raw.iter_mut() {
            *p = (p.0.min(p.1).max(-1.0), p.0.max(p.1).min(1.0));
        }
        raw.retain(|p| p.1 > p.0);
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match pieces.last_mut() {
                Some(last) if lo <= last.1 + MERGE_TOL => last.1 = last.1.max(hi),
                _ => pieces.push((lo, hi)),
            }
        }
        IntervalUnion { pieces }
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn measure(&self) -> f64 {
        self.pieces.iter().map(|p| p.1 - p.0).sum()
    }

    pub fn union(&self, other: &IntervalUnion) -> IntervalUnion {
        let mut all = self.pieces.clone();
        all.extend_from_slice(&other.pieces);
        Self::from_pieces(all)
    }

    /// `[-1, 1]` minus the union, as open gaps.
    pub fn complement(&self) -> IntervalUnion {
        let mut gaps = Vec::with_capacity(self.pieces.len() + 1);
        let mut cursor = -1.0;
        for &(lo, hi) in &self.pieces {
            if lo > cursor {
                gaps.push((cursor, lo));
            }
            cursor = hi;
        }
        if cursor < 1.0 {
            gaps.push((cursor, 1.0));
        }
        IntervalUnion { pieces: gaps }
    }

    /// `(lo, hi) ⊆` some piece, allowing `slack` at both ends.
    pub fn contains_interval(&self, lo: f64, hi: f64, slack: f64) -> bool {
        let i = self.pieces.partition_point(|p| p.1 < hi - slack);
        self.pieces
            .get(i)
            .is_some_and(|p| p.0 <= lo + slack && hi - slack <= p.1)
    }

    /// Every piece of `self` lies inside a piece of `other`.
    pub fn is_subset(&self, other: &IntervalUnion, slack: f64) -> bool {
        self.pieces
            .iter()
            .all(|&(lo, hi)| other.contains_interval(lo, hi, slack))
    }
}
