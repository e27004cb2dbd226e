//! Mapping client clusters to models.
//!
//! The cost of giving client cluster `k` model `j` is the total loss of the
//! cluster's clients on model `j` (or, alternatively, minus its overlap with
//! the clients model `j` served last round). A Hungarian solve picks the
//! cheapest bijection; the "no matching" ablation orders clusters by their
//! smallest client id instead.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result, Scalar};

/// Square cost matrix: row = client cluster, column = model.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix<T>(Array2<T>);

impl<T: Scalar> CostMatrix<T> {
    pub fn new(costs: Array2<T>) -> Result<Self> {
        if costs.nrows() != costs.ncols() {
            return Err(Error::DimensionMismatch {
                what: "cost matrix columns",
                expected: costs.nrows(),
                found: costs.ncols(),
            });
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        Ok(CostMatrix(costs))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.0
    }

    /// Total cost of `perm`, summed in row order.
    pub fn cost_of(&self, perm: &[usize]) -> T {
        perm.iter().enumerate().map(|(k, &j)| self.0[[k, j]]).sum()
    }
}

/// Edge weight of the cluster-to-model graph.
#[derive(Clone, Copy, Debug)]
pub enum CostMode<'a> {
    SumLoss,
    /// Previous model of each client (`None` when it had none).
    Overlap(&'a [Option<usize>]),
}

fn group_sizes(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0; k];
    for &l in labels {
        if l >= k {
            return Err(Error::invalid(format!("label {l} out of range for {k} clusters")));
        }
        sizes[l] += 1;
    }
    let groups = sizes.iter().filter(|&&s| s > 0).count();
    if groups < k {
        return Err(Error::DegenerateClustering { groups, expected: k });
    }
    Ok(sizes)
}

/// Builds the `K x K` cost matrix for clustered clients.
///
/// `losses` is the `M x K` loss matrix with rows in the same order as
/// `labels`.
pub fn build_cost_matrix<T: Scalar>(
    labels: &[usize],
    losses: ArrayView2<'_, T>,
    mode: CostMode<'_>,
) -> Result<CostMatrix<T>> {
    let k = losses.ncols();
    if labels.len() != losses.nrows() {
        return Err(Error::DimensionMismatch { what: "labels", expected: losses.nrows(), found: labels.len() });
    }
    group_sizes(labels, k)?;
    let mut costs = Array2::<T>::zeros((k, k));
    match mode {
        CostMode::SumLoss => {
            for (row, &l) in losses.rows().into_iter().zip(labels) {
                costs.row_mut(l).zip_mut_with(&row, |c, &x| *c += x);
            }
        }
        CostMode::Overlap(prev) => {
            if prev.len() != labels.len() {
                return Err(Error::DimensionMismatch {
                    what: "previous assignment",
                    expected: labels.len(),
                    found: prev.len(),
                });
            }
            for (&l, p) in labels.iter().zip(prev) {
                if let Some(j) = *p {
                    if j >= k {
                        return Err(Error::invalid(format!("previous model {j} out of range")));
                    }
                    costs[[l, j]] -= T::one();
                }
            }
        }
    }
    CostMatrix::new(costs)
}

/// O(n^3) Hungarian algorithm with row/column potentials; returns the
/// column assigned to every row.
fn hungarian<T: Scalar>(c: ArrayView2<'_, T>) -> Vec<usize> {
    let n = c.nrows();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials and matching, index 0 is the virtual start column
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![T::infinity(); n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = T::infinity();
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            assignment[col_owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Cost-minimizing bijection from client clusters (rows) to models.
///
/// Among optimal permutations (up to a relative tolerance of 1e-12) the
/// lexicographically smallest is returned.
pub fn min_cost_matching<T: Scalar>(costs: &CostMatrix<T>) -> Vec<usize> {
    let n = costs.size();
    let c = costs.values();
    let best = costs.cost_of(&hungarian(c.view()));
    let scale = c.iter().fold(T::zero(), |m, &x| m.max(x.abs())) * T::from_count(n.max(1));
    let tol = T::lit(1e-12) * (scale + T::one());

    let mut perm = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut prefix = T::zero();
    for row in 0..n {
        let rest_rows: Vec<usize> = (row + 1..n).collect();
        let pick = (0..n)
            .filter(|&j| !used[j])
            .find(|&j| {
                let rest_cols: Vec<usize> = (0..n).filter(|&x| !used[x] && x != j).collect();
                let sub =
                    Array2::from_shape_fn((rest_rows.len(), rest_cols.len()), |(a, b)| c[[rest_rows[a], rest_cols[b]]]);
                let sub_perm = hungarian(sub.view());
                let sub_cost: T = sub_perm.iter().enumerate().map(|(a, &b)| sub[[a, b]]).sum();
                prefix + c[[row, j]] + sub_cost <= best + tol
            })
            .expect("an optimal completion always exists");
        used[pick] = true;
        prefix += c[[row, pick]];
        perm.push(pick);
    }
    perm
}

/// Label values present in `labels`, ordered by the smallest position at
/// which each occurs.
pub fn groups_by_first_member(labels: &[usize]) -> Vec<usize> {
    let mut order = Vec::new();
    for &l in labels {
        if !order.contains(&l) {
            order.push(l);
        }
    }
    order
}

/// "No matching": the cluster with the k-th smallest minimum client id gets
/// model k. Rows of `labels` must be in ascending client-id order.
pub fn ordered_assignment(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    group_sizes(labels, k)?;
    let mut perm = vec![0; k];
    for (model, cluster) in groups_by_first_member(labels).into_iter().enumerate() {
        perm[cluster] = model;
    }
    Ok(perm)
}
