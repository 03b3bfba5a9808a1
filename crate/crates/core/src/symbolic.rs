//! Itineraries, finite-depth symbolic spaces and the nested-subshift check.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map_model::{Partition, PiecewiseMap, Word};

/// Slack on both ends when comparing cylinder images.
pub const CONTAINMENT_SLACK: f64 = 1e-10;
/// Cylinders shorter than this are flagged in reports.
pub const SHORT_CYLINDER: f64 = 1e-10;
const REPORT_LIMIT: usize = 20;

/// Branch indices visited by `x, T x, …, T^{m-1} x`.
pub fn itinerary(t: &PiecewiseMap, x: f64, m: usize) -> Result<Word> {
    if m == 0 {
        return Ok(Word::default());
    }
    let orbit = t.iterate(x, m - 1)?;
    let mut w = Vec::with_capacity(m);
    for (step, &y) in orbit.iter().enumerate() {
        match t.branch_index(y) {
            Ok(k) => w.push(k as u16),
            Err(_) => {
                return Err(Error::OrbitTruncated {
                    step,
                    orbit: orbit[..=step].to_vec(),
                })
            }
        }
    }
    Ok(Word(w))
}

/// Admissible words of length `depth`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSet {
    pub depth: usize,
    pub words: BTreeSet<Word>,
}

impl WordSet {
    pub fn from_partition(p: &Partition) -> Self {
        WordSet {
            depth: p.depth,
            words: p.cells.iter().map(|c| c.word.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Prefixes of length `k`.
    pub fn truncate(&self, k: usize) -> WordSet {
        WordSet {
            depth: k.min(self.depth),
            words: self.words.iter().map(|w| w.prefix(k)).collect(),
        }
    }

    pub fn is_subset(&self, other: &WordSet) -> bool {
        self.words.is_subset(&other.words)
    }
}

/// Word to cylinder interval at a fixed depth.
#[derive(Debug, Clone)]
pub struct CylinderTable {
    pub depth: usize,
    pub cylinders: HashMap<Word, (f64, f64)>,
}

impl CylinderTable {
    pub fn from_partition(p: &Partition) -> Self {
        CylinderTable {
            depth: p.depth,
            cylinders: p
                .cells
                .iter()
                .map(|c| (c.word.clone(), (c.left, c.right)))
                .collect(),
        }
    }

    pub fn get(&self, w: &Word) -> Option<(f64, f64)> {
        self.cylinders.get(w).copied()
    }
}

/// `Σ(T)` truncated to depth `m`.
pub fn word_set(t: &PiecewiseMap, m: usize) -> Result<WordSet> {
    if m == 0 {
        return Ok(WordSet {
            depth: 0,
            words: [Word::default()].into_iter().collect(),
        });
    }
    Ok(WordSet::from_partition(&t.refine_partition(m)?))
}

/// Smallest cell length of `𝒫_{t0}`.
pub fn min_cylinder_length(t: &PiecewiseMap, t0: usize) -> Result<f64> {
    Ok(t.refine_partition(t0)?.min_len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentViolation {
    pub word: String,
    pub depth: usize,
    pub image0: (f64, f64),
    pub image1: (f64, f64),
}

/// Per-depth summary of the nested check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedLevel {
    pub depth: usize,
    pub words0: usize,
    pub words1: usize,
    pub missing: usize,
    pub containment_violations: usize,
    /// Largest distance between a cylinder of `T0` and its counterpart.
    pub max_cylinder_distance: f64,
    pub min_length_ratio: f64,
    pub max_length_ratio: f64,
    pub short_cylinders: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedReport {
    pub depth: usize,
    pub slack: f64,
    pub levels: Vec<NestedLevel>,
    /// First missing words (at most a few per report).
    pub missing_words: Vec<String>,
    pub violations: Vec<ContainmentViolation>,
    pub words_included: bool,
    pub images_contained: bool,
    pub pass: bool,
}

impl NestedReport {
    /// `MissingCounterpart` for the first word of `T0` absent from `T1`.
    pub fn ensure_counterparts(&self) -> Result<()> {
        match self.missing_words.first() {
            Some(w) => Err(Error::MissingCounterpart(w.clone())),
            None => Ok(()),
        }
    }
}

fn compare_level(
    t0: &PiecewiseMap,
    t1: &PiecewiseMap,
    p0: &Partition,
    p1: &Partition,
    report: &mut NestedReport,
) -> NestedLevel {
    let index: HashMap<&Word, usize> = p1.cells.iter().enumerate().map(|(i, c)| (&c.word, i)).collect();
    struct Item {
        missing: bool,
        violation: Option<((f64, f64), (f64, f64))>,
        dist: f64,
        ratio: f64,
        short: bool,
    }
    let items: Vec<Item> = p0
        .cells
        .par_iter()
        .map(|c0| {
            let short = c0.len() < SHORT_CYLINDER;
            let Some(&i1) = index.get(&c0.word) else {
                return Item {
                    missing: true,
                    violation: None,
                    dist: 0.0,
                    ratio: f64::NAN,
                    short,
                };
            };
            let c1 = &p1.cells[i1];
            let im0 = t0.word_image(c0.left, c0.right, &c0.word);
            let im1 = t1.word_image(c1.left, c1.right, &c1.word);
            let ok = im1.0 <= im0.0 + CONTAINMENT_SLACK && im0.1 - CONTAINMENT_SLACK <= im1.1;
            Item {
                missing: false,
                violation: (!ok).then_some((im0, im1)),
                dist: (c0.left - c1.left).abs().max((c0.right - c1.right).abs()),
                ratio: c1.len() / c0.len(),
                short: short || c1.len() < SHORT_CYLINDER,
            }
        })
        .collect();
    let mut level = NestedLevel {
        depth: p0.depth,
        words0: p0.len(),
        words1: p1.len(),
        missing: 0,
        containment_violations: 0,
        max_cylinder_distance: 0.0,
        min_length_ratio: f64::INFINITY,
        max_length_ratio: 0.0,
        short_cylinders: 0,
    };
    for (c0, it) in p0.cells.iter().zip(&items) {
        if it.short {
            level.short_cylinders += 1;
        }
        if it.missing {
            level.missing += 1;
            if report.missing_words.len() < REPORT_LIMIT {
                report.missing_words.push(c0.word.to_string());
            }
            continue;
        }
        level.max_cylinder_distance = level.max_cylinder_distance.max(it.dist);
        if it.ratio.is_finite() {
            level.min_length_ratio = level.min_length_ratio.min(it.ratio);
            level.max_length_ratio = level.max_length_ratio.max(it.ratio);
        }
        if let Some((image0, image1)) = it.violation {
            level.containment_violations += 1;
            if report.violations.len() < REPORT_LIMIT {
                report.violations.push(ContainmentViolation {
                    word: c0.word.to_string(),
                    depth: p0.depth,
                    image0,
                    image1,
                });
            }
        }
    }
    level
}

/// Check `Σ_m(T0) ⊆ Σ_m(T1)` and `T0^j(ω) ⊆ T1^j(𝒰ω)` for every cylinder
/// `ω` of depth `j ≤ m`, where `𝒰` matches cylinders by itinerary.
pub fn check_nested(t0: &PiecewiseMap, t1: &PiecewiseMap, m: usize) -> Result<NestedReport> {
    if t0.branch_count() != t1.branch_count() {
        return Err(Error::Precondition(format!(
            "maps have {} and {} branches",
            t0.branch_count(),
            t1.branch_count()
        )));
    }
    if m == 0 {
        return Err(Error::Precondition("nested depth must be positive".into()));
    }
    // run the cell-count guard before any work
    let guard = |t: &PiecewiseMap| {
        let log2 = t.bounds().big_lambda.max(t.branch_count() as f64).log2();
        if m as f64 * log2 > crate::map_model::CELL_GUARD_LOG2 {
            Err(Error::CellCountExceeded {
                cells: 2f64.powf(m as f64 * log2),
            })
        } else {
            Ok(())
        }
    };
    guard(t0)?;
    guard(t1)?;
    let mut report = NestedReport {
        depth: m,
        slack: CONTAINMENT_SLACK,
        levels: Vec::with_capacity(m),
        missing_words: Vec::new(),
        violations: Vec::new(),
        words_included: true,
        images_contained: true,
        pass: true,
    };
    let mut p0 = t0.branch_partition();
    let mut p1 = t1.branch_partition();
    for depth in 1..=m {
        if depth > 1 {
            p0 = t0.pull_back(&p0)?;
            p1 = t1.pull_back(&p1)?;
        }
        let level = compare_level(t0, t1, &p0, &p1, &mut report);
        report.words_included &= level.missing == 0;
        report.images_contained &= level.containment_violations == 0;
        report.levels.push(level);
    }
    report.pass = report.words_included && report.images_contained;
    Ok(report)
}
