//! Brute-force references for the clustering, matching and metric code.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use num_rational::Ratio;

/// ARI from raw pair counts, in exact rational arithmetic.
pub fn pair_count_ari(a: &[usize], b: &[usize]) -> f64 {
    let (mut both, mut only_a, mut only_b, mut neither) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1,
                (true, false) => only_a += 1,
                (false, true) => only_b += 1,
                (false, false) => neither += 1,
            }
        }
    }
    let den = (neither + only_a) * (only_a + both) + (neither + only_b) * (only_b + both);
    if den == 0 {
        return if only_a == 0 && only_b == 0 { 1.0 } else { 0.0 };
    }
    let r = Ratio::new(2 * (neither * both - only_a * only_b), den);
    *r.numer() as f64 / *r.denom() as f64
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Cheapest total cost over all row-to-column bijections.
pub fn min_assignment_cost(costs: &Array2<f64>) -> f64 {
    permutations(costs.nrows())
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| costs[[i, j]]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

pub fn partition_inertia(points: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for g in 0..k {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
        if rows.is_empty() {
            continue;
        }
        for c in 0..points.ncols() {
            let mean = rows.iter().map(|&i| points[[i, c]]).sum::<f64>() / rows.len() as f64;
            total += rows.iter().map(|&i| (points[[i, c]] - mean).powi(2)).sum::<f64>();
        }
    }
    total
}

/// Minimum within-group sum of squares over every labelling into `k` groups.
pub fn optimal_inertia(points: ArrayView2<'_, f64>, k: usize) -> f64 {
    let m = points.nrows();
    let mut labels = vec![0usize; m];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(partition_inertia(points, &labels, k));
        let mut i = 0;
        while i < m && labels[i] == k - 1 {
            labels[i] = 0;
            i += 1;
        }
        if i == m {
            return best;
        }
        labels[i] += 1;
    }
}
