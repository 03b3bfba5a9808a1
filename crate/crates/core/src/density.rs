//! Ulam discretization of the transfer operator and stationary densities.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::MapFamily;
use crate::map_model::PiecewiseMap;

/// Power iteration stops once successive iterates differ by less than this in L¹.
pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 200_000;
/// Pieces of a bin shorter than this fraction of the bin are ignored.
const EDGE_TOL: f64 = 1e-14;

/// Column-stochastic Ulam matrix in compressed sparse column form.
///
/// Entry `(i, j)` is `|bin_j ∩ T⁻¹(bin_i)| / |bin_j|`.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    bins: usize,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<f64>,
}

fn bin_edge(bins: usize, i: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / bins as f64
}

fn bin_of(bins: usize, y: f64) -> usize {
    (((y + 1.0) * 0.5 * bins as f64).floor() as usize).min(bins - 1)
}

fn column(t: &PiecewiseMap, bins: usize, j: usize) -> Result<Vec<(u32, f64)>> {
    let (x0, x1) = (bin_edge(bins, j), bin_edge(bins, j + 1));
    let width = x1 - x0;
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for br in t.branches() {
        let (u, v) = (x0.max(br.left), x1.min(br.right));
        if !(v > u) {
            continue;
        }
        let (fu, fv) = (br.eval(u).clamp(-1.0, 1.0), br.eval(v).clamp(-1.0, 1.0));
        let (ylo, yhi) = (fu.min(fv), fu.max(fv));
        // x-points: the sub-bin ends plus preimages of interior bin edges
        let first = bin_of(bins, ylo) + 1;
        let last = bin_of(bins, yhi);
        let mut ys = vec![ylo];
        for i in first..=last {
            let e = bin_edge(bins, i);
            if e > ylo + EDGE_TOL && e < yhi - EDGE_TOL {
                ys.push(e);
            }
        }
        ys.push(yhi);
        let mut xs = Vec::with_capacity(ys.len());
        xs.push(if br.increasing { u } else { v });
        for &y in &ys[1..ys.len() - 1] {
            xs.push(br.invert(y)?.clamp(u, v));
        }
        xs.push(if br.increasing { v } else { u });
        for w in 0..ys.len() - 1 {
            let len = (xs[w + 1] - xs[w]).abs();
            if len <= 0.0 {
                continue;
            }
            let row = bin_of(bins, 0.5 * (ys[w] + ys[w + 1])) as u32;
            entries.push((row, len / width));
        }
    }
    entries.sort_by_key(|e| e.0);
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
    for (r, v) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == r => last.1 += v,
            _ => merged.push((r, v)),
        }
    }
    Ok(merged)
}

/// Ulam matrix with exact preimage lengths from the monotone branch inverses.
pub fn ulam_matrix(t: &PiecewiseMap, bins: usize) -> Result<TransferMatrix> {
    if bins < 2 {
        return Err(Error::Precondition(format!("need at least 2 bins, got {bins}")));
    }
    let cols = (0..bins)
        .into_par_iter()
        .map(|j| column(t, bins, j))
        .collect::<Result<Vec<_>>>()?;
    let mut col_ptr = Vec::with_capacity(bins + 1);
    let mut rows = Vec::new();
    let mut vals = Vec::new();
    col_ptr.push(0);
    for c in cols {
        for (r, v) in c {
            rows.push(r);
            vals.push(v);
        }
        col_ptr.push(rows.len());
    }
    Ok(TransferMatrix {
        bins,
        col_ptr,
        rows,
        vals,
    })
}

impl TransferMatrix {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Dense entry lookup, for tests and small matrices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        (self.col_ptr[j]..self.col_ptr[j + 1])
            .find(|&k| self.rows[k] as usize == i)
            .map_or(0.0, |k| self.vals[k])
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|j| self.vals[self.col_ptr[j]..self.col_ptr[j + 1]].iter().sum())
            .collect()
    }

    /// `M v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.bins];
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.rows[k] as usize] += self.vals[k] * vj;
            }
        }
        out
    }
}

/// Piecewise-constant probability density on `bins` equal bins of `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UlamDensity {
    pub bins: usize,
    /// Bin masses, summing to one.
    pub weights: Vec<f64>,
    pub iterations: usize,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Stationary vector of `M` by power iteration from the uniform vector.
pub fn stationary_density(m: &TransferMatrix) -> Result<UlamDensity> {
    let n = m.bins;
    let mut v = vec![1.0 / n as f64; n];
    let mut step = f64::INFINITY;
    for it in 1..=POWER_MAX_ITER {
        let mut next = m.apply(&v);
        let mass: f64 = next.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: f64::NAN,
            });
        }
        next.iter_mut().for_each(|x| *x /= mass);
        step = l1(&next, &v);
        v = next;
        if step < POWER_TOL {
            return Ok(UlamDensity {
                bins: n,
                weights: v,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: POWER_MAX_ITER,
        residual: step,
    })
}

/// Ulam density of `T` with `bins` bins.
pub fn invariant_density(t: &PiecewiseMap, bins: usize) -> Result<UlamDensity> {
    stationary_density(&ulam_matrix(t, bins)?)
}

impl UlamDensity {
    pub fn bin_width(&self) -> f64 {
        2.0 / self.bins as f64
    }

    /// Density value on bin `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.weights[i] / self.bin_width()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.value(i)).collect()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.bin_width()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `(min φ, max φ)` over bins.
    pub fn bounds(&self) -> (f64, f64) {
        self.values()
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Total variation of the step function.
    pub fn total_variation(&self) -> f64 {
        let v = self.values();
        v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// `‖M d − d‖₁` on bin masses.
    pub fn fixed_point_residual(&self, m: &TransferMatrix) -> f64 {
        l1(&m.apply(&self.weights), &self.weights)
    }

    /// `μ((-1, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let pos = ((x + 1.0) / self.bin_width()).clamp(0.0, self.bins as f64);
        let whole = pos.floor() as usize;
        let mut c: f64 = self.weights[..whole.min(self.bins)].iter().sum();
        if whole < self.bins {
            c += self.weights[whole] * (pos - whole as f64);
        }
        c
    }

    /// `μ((lo, hi))`.
    pub fn measure(&self, lo: f64, hi: f64) -> f64 {
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    /// `∫ |φ − ψ|` between two step densities on possibly different grids.
    pub fn l1_distance(&self, other: &UlamDensity) -> f64 {
        let mut edges: Vec<f64> = (0..=self.bins).map(|i| bin_edge(self.bins, i)).collect();
        edges.extend((0..=other.bins).map(|i| bin_edge(other.bins, i)));
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        edges
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let a = self.value(bin_of(self.bins, mid));
                let b = other.value(bin_of(other.bins, mid));
                (a - b).abs() * (w[1] - w[0])
            })
            .sum()
    }
}

/// `2^{-2} S^{-N}` where `S` is the chosen reading of `‖T‖_∞`.
pub fn density_lower_bound(s: f64, n: usize) -> f64 {
    0.25 * s.powi(-(n as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBoundsRow {
    pub a: f64,
    pub min: f64,
    pub max: f64,
    pub total_variation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBoundsReport {
    pub check: &'static str,
    pub grid: usize,
    pub bins: usize,
    pub gamma: f64,
    pub min: f64,
    pub max: f64,
    pub pass: bool,
    pub rows: Vec<DensityBoundsRow>,
    /// Parameters violating `γ ≤ φ ≤ 1/γ`.
    pub witnesses: Vec<f64>,
}

impl MapFamily {
    /// Ulam densities across `grid`, checked against `γ ≤ φ_a ≤ 1/γ`.
    pub fn check_density_bounds(&self, grid: &[f64], bins: usize, gamma: f64) -> Result<DensityBoundsReport> {
        let rows = grid
            .par_iter()
            .map(|&a| {
                let d = invariant_density(&self.instantiate(a)?, bins)?;
                let (min, max) = d.bounds();
                Ok(DensityBoundsRow {
                    a,
                    min,
                    max,
                    total_variation: d.total_variation(),
                    pass: min >= gamma && max <= 1.0 / gamma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let min = rows.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|r| r.max).fold(f64::NEG_INFINITY, f64::max);
        let witnesses: Vec<f64> = rows.iter().filter(|r| !r.pass).map(|r| r.a).collect();
        Ok(DensityBoundsReport {
            check: "density bounds",
            grid: grid.len(),
            bins,
            gamma,
            min,
            max,
            pass: witnesses.is_empty(),
            rows,
            witnesses,
        })
    }
}
