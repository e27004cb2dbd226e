//! Clustering agreement, model-to-optimum distances, convergence statistics
//! and the loss-gap separation diagnostic.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};

use crate::matching::{min_cost_matching, CostMatrix};
use crate::task::ModelParams;
use crate::{Error, Result, Scalar};

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut ab = BTreeMap::new();
    let mut ba = BTreeMap::new();
    a.iter().zip(b).all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

/// Adjusted Rand index of two labelings of the same items.
///
/// When the chance-corrected denominator vanishes (e.g. both labelings put
/// everything in one cluster) the index is 1 for identical partitions and 0
/// otherwise.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { what: "labelings", expected: a.len(), found: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::invalid("ARI needs at least two items"));
    }
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let expected = sum_a * sum_b / pairs(a.len());
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(if same_partition(a, b) { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Distance of every model to the optimum it is matched with under the
/// distance-minimizing bijection; returns `(distances, model -> optimum)`.
pub fn model_distances<T: Scalar>(
    models: &[ModelParams<T>],
    optima: &[ModelParams<T>],
) -> Result<(Vec<T>, Vec<usize>)> {
    if models.len() != optima.len() {
        return Err(Error::DimensionMismatch { what: "optima", expected: models.len(), found: optima.len() });
    }
    for m in models.iter().chain(optima) {
        if m.len() != models[0].len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vectors",
                expected: models[0].len(),
                found: m.len(),
            });
        }
    }
    let k = models.len();
    let dist = Array2::from_shape_fn((k, k), |(i, j)| models[i].distance(&optima[j]));
    let perm = min_cost_matching(&CostMatrix::new(dist.clone())?);
    Ok((perm.iter().enumerate().map(|(i, &j)| dist[[i, j]]).collect(), perm))
}

/// Outcome of the loss-gap separation diagnostic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationCheck {
    /// Smallest gap between a client's best and second-best loss.
    pub delta_gap: f64,
    /// Smallest distance between loss vectors of clients whose best models
    /// differ; `+inf` when all clients share a best model.
    pub min_cross_distance: f64,
    /// `min_cross_distance >= sqrt(2) * delta_gap` (up to 1e-12).
    pub holds: bool,
}

/// Checks that clients with different best models have loss vectors at
/// least `sqrt(2)` times the minimum best/second-best gap apart.
pub fn loss_gap_separation_check<T: Scalar>(losses: ArrayView2<'_, T>) -> SeparationCheck {
    let rows: Vec<Vec<f64>> = losses.rows().into_iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect();
    let mut best = Vec::with_capacity(rows.len());
    let mut delta_gap = f64::INFINITY;
    for r in &rows {
        let (arg, low) =
            r.iter().enumerate().fold((0, f64::INFINITY), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc });
        let second = r.iter().enumerate().filter(|&(j, _)| j != arg).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
        delta_gap = delta_gap.min(second - low);
        best.push(arg);
    }
    let mut min_cross = f64::INFINITY;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if best[i] != best[j] {
                let d = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                min_cross = min_cross.min(d);
            }
        }
    }
    let holds = min_cross == f64::INFINITY || min_cross >= std::f64::consts::SQRT_2 * delta_gap - 1e-12;
    SeparationCheck { delta_gap, min_cross_distance: min_cross, holds }
}

/// Speed of cluster recovery over a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceStats {
    /// ARI at round `min(10, T)` as a percentage of the final ARI.
    pub pct_final_ari_at_10: f64,
    /// First (1-based) round with ARI >= 0.9.
    pub first_round_ari_90: Option<usize>,
    pub final_ari: f64,
    /// First (1-based) round from which ARI stays at 1 until the end.
    pub rounds_to_full_recovery: Option<usize>,
}

const FULL: f64 = 1.0 - 1e-12;

pub fn convergence_stats(ari_series: &[f64]) -> Result<ConvergenceStats> {
    let final_ari = *ari_series.last().ok_or_else(|| Error::invalid("empty ARI series"))?;
    let at_10 = ari_series[ari_series.len().min(10) - 1];
    let pct_final_ari_at_10 = if final_ari == 0.0 { 0.0 } else { 100.0 * at_10 / final_ari };
    let first_round_ari_90 = ari_series.iter().position(|&a| a >= 0.9).map(|i| i + 1);
    let rounds_to_full_recovery = if final_ari >= FULL {
        let tail = ari_series.iter().rev().take_while(|&&a| a >= FULL).count();
        Some(ari_series.len() - tail + 1)
    } else {
        None
    };
    Ok(ConvergenceStats { pct_final_ari_at_10, first_round_ari_90, final_ari, rounds_to_full_recovery })
}
