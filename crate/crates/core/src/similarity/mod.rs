//! Earth mover's distance between equal-size constellation point clouds.
//!
//! Distances are reported per point: the minimum over bijections of the
//! summed Euclidean matching cost, divided by the cloud size.

mod assignment;

pub use assignment::min_cost_assignment;

use std::io::Write;

use num_complex::Complex;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::{Error, Real, Result};

/// Default pattern cardinality.
pub const DEFAULT_PATTERN_SIZE: usize = 64;

/// Largest cloud the permutation oracle accepts.
pub const BRUTEFORCE_MAX: usize = 8;

/// Fixed-size cloud of I/Q points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pattern<T> {
    points: Vec<[T; 2]>,
}

impl<T: Real> Pattern<T> {
    pub fn new(points: Vec<[T; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("pattern must hold at least one point"));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("pattern coordinates must be finite"));
        }
        Ok(Pattern { points })
    }

    pub fn from_symbols(symbols: &[Complex<T>]) -> Result<Self> {
        Self::new(symbols.iter().map(|s| [s.re, s.im]).collect())
    }

    pub fn points(&self) -> &[[T; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every point shifted by `t`.
    pub fn translated(&self, t: [T; 2]) -> Self {
        Pattern {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1]])
                .collect(),
        }
    }
}

fn dist<T: Real>(a: &[T; 2], b: &[T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn check_sizes<T>(a: &Pattern<T>, b: &Pattern<T>) -> Result<usize> {
    if a.points.len() != b.points.len() {
        return Err(Error::invalid(format!(
            "pattern sizes differ ({} vs {})",
            a.points.len(),
            b.points.len()
        )));
    }
    Ok(a.points.len())
}

/// Exact per-point EMD via linear assignment.
pub fn emd<T: Real>(a: &Pattern<T>, b: &Pattern<T>) -> Result<T> {
    let n = check_sizes(a, b)?;
    let mut cost = Vec::with_capacity(n * n);
    for p in &a.points {
        cost.extend(b.points.iter().map(|q| dist(p, q)));
    }
    let (total, _) = min_cost_assignment(&cost, n);
    Ok(total / T::lit(n as f64))
}

/// Per-point EMD by enumerating all `n!` bijections (Heap's algorithm).
/// Only for `n <= 8`; this is the reference the assignment solver is
/// checked against.
pub fn emd_bruteforce<T: Real>(a: &Pattern<T>, b: &Pattern<T>) -> Result<T> {
    let n = check_sizes(a, b)?;
    if n > BRUTEFORCE_MAX {
        return Err(Error::invalid(format!(
            "brute-force EMD limited to {BRUTEFORCE_MAX} points, got {n}"
        )));
    }
    let cost = |perm: &[usize]| -> T {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| dist(&a.points[i], &b.points[j]))
            .sum()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best / T::lit(n as f64))
}

/// Seeded uniform subsample (without replacement) of `n_pattern` symbols,
/// kept in stream order.
pub fn extract_pattern<T: Real>(
    equalized: &[Complex<T>],
    n_pattern: usize,
    seed: u64,
) -> Result<Pattern<T>> {
    if n_pattern == 0 || equalized.len() < n_pattern {
        return Err(Error::invalid(format!(
            "cannot draw {n_pattern} points from {} symbols",
            equalized.len()
        )));
    }
    let mut idx =
        index::sample(&mut stream_rng(seed, 0x9a77), equalized.len(), n_pattern).into_vec();
    idx.sort_unstable();
    Pattern::from_symbols(&idx.into_iter().map(|k| equalized[k]).collect::<Vec<_>>())
}

/// Labelled symmetric matrix of pairwise per-point EMDs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmdMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl EmdMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// CSV with a header row and a label column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(std::iter::once("").chain(self.labels.iter().map(String::as_str)))?;
        for (label, row) in self.labels.iter().zip(&self.values) {
            wr.write_record(
                std::iter::once(label.clone()).chain(row.iter().map(|v| format!("{v:.6}"))),
            )?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Pairwise EMD of labelled patterns; the upper triangle is evaluated in
/// parallel and mirrored.
pub fn emd_matrix<T: Real>(patterns: &[(String, Pattern<T>)]) -> Result<EmdMatrix> {
    let k = patterns.len();
    if let Some((_, first)) = patterns.first() {
        if let Some((label, _)) = patterns.iter().find(|(_, p)| p.len() != first.len()) {
            return Err(Error::invalid(format!(
                "pattern {label} differs in cardinality"
            )));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let dists = pairs
        .par_iter()
        .map(|&(i, j)| emd(&patterns[i].1, &patterns[j].1).map(|d| d.as_f64()))
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![vec![0.0; k]; k];
    for (&(i, j), d) in pairs.iter().zip(dists) {
        values[i][j] = d;
        values[j][i] = d;
    }
    Ok(EmdMatrix {
        labels: patterns.iter().map(|(l, _)| l.clone()).collect(),
        values,
    })
}
