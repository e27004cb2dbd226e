//! Model initialization, loss-vector collection and client-to-model
//! assignment rules.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use super::config::{Clusterer, Embedding, FederationConfig, InitPolicy, MatchingMode};
use crate::cluster::{agglomerative, kmeans};
use crate::linalg::{gaussian_matrix, gaussian_vector, orthonormalize_rows};
use crate::matching::{build_cost_matrix, groups_by_first_member, min_cost_matching, ordered_assignment, CostMode};
use crate::rng::{stream, Purpose};
use crate::task::{loss, sqrt_transform, ClientDataset, ModelParams, TaskSpec};
use crate::{Error, Result, Scalar};

/// Initial parameters of `count` models.
pub fn init_models<T: Scalar>(
    policy: InitPolicy,
    count: usize,
    task: &TaskSpec,
    seed: u64,
) -> Result<Vec<ModelParams<T>>> {
    let p = task.param_dim();
    let mut rng = stream(seed, Purpose::Init, 0, 0);
    let scale = 1.0 / (p as f64).sqrt();
    let wrap = |v: Array1<f64>| ModelParams::from_array_unchecked(v.mapv(T::lit));
    match policy {
        InitPolicy::Orthonormal => {
            if count > p {
                return Err(Error::Infeasible(format!(
                    "{count} orthonormal models need parameter dimension >= {count}, have {p}"
                )));
            }
            let mut m = gaussian_matrix(count, p, &mut rng);
            orthonormalize_rows(&mut m)?;
            Ok(m.rows().into_iter().map(|r| wrap(r.to_owned())).collect())
        }
        InitPolicy::SameRandom => {
            let v = wrap(gaussian_vector(p, &mut rng) * scale);
            Ok(vec![v; count])
        }
        InitPolicy::IndependentRandom => Ok((0..count).map(|_| wrap(gaussian_vector(p, &mut rng) * scale)).collect()),
    }
}

/// Loss of every participating client on every model.
#[derive(Clone, Debug, PartialEq)]
pub struct LossMatrix<T> {
    /// Client id of every row, ascending.
    pub client_ids: Vec<usize>,
    /// Raw empirical losses, `M x K`.
    pub losses: Array2<T>,
    /// Rows as clustered: the losses or their square roots.
    pub embedded: Array2<T>,
}

impl<T: Scalar> LossMatrix<T> {
    pub fn from_losses(client_ids: Vec<usize>, losses: Array2<T>, embedding: Embedding) -> Result<Self> {
        if client_ids.len() != losses.nrows() {
            return Err(Error::DimensionMismatch {
                what: "loss matrix rows",
                expected: client_ids.len(),
                found: losses.nrows(),
            });
        }
        if losses.iter().any(|l| !l.is_finite() || *l < T::zero()) {
            return Err(Error::invalid("losses must be finite and non-negative"));
        }
        let embedded = match embedding {
            Embedding::Loss => losses.clone(),
            Embedding::SqrtLoss => {
                let flat = sqrt_transform(losses.as_standard_layout().as_slice().expect("standard layout"))?;
                Array2::from_shape_vec(losses.raw_dim(), flat).expect("same shape")
            }
        };
        Ok(LossMatrix { client_ids, losses, embedded })
    }

    pub fn clients(&self) -> usize {
        self.losses.nrows()
    }

    pub fn models(&self) -> usize {
        self.losses.ncols()
    }
}

/// Runs every client's data through every model.
pub fn collect_loss_matrix<T: Scalar>(
    models: &[ModelParams<T>],
    clients: &[&ClientDataset<T>],
    task: &TaskSpec,
    embedding: Embedding,
) -> Result<LossMatrix<T>> {
    if models.is_empty() {
        return Err(Error::invalid("no models to evaluate"));
    }
    let rows: Vec<Vec<T>> = clients
        .par_iter()
        .map(|c| models.iter().map(|m| loss(task, m, c)).collect::<Result<Vec<T>>>())
        .collect::<Result<_>>()?;
    let mut losses = Array2::zeros((clients.len(), models.len()));
    for (i, row) in rows.into_iter().enumerate() {
        losses.row_mut(i).assign(&Array1::from(row));
    }
    LossMatrix::from_losses(clients.iter().map(|c| c.client_id).collect(), losses, embedding)
}

/// Clusters the embedded loss vectors into `K` groups and maps groups to
/// models; returns the model of every row of `losses`.
///
/// `previous` holds each row's model from the last round (used by the
/// overlap weighting). When clustering yields fewer than `K` groups the
/// groups present take models `0..g` in order of their smallest client id.
pub fn clove_assign<T: Scalar, R: Rng + ?Sized>(
    losses: &LossMatrix<T>,
    cfg: &FederationConfig,
    previous: &[Option<usize>],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let k = losses.models();
    if losses.clients() < k {
        return Err(Error::invalid(format!("{} participating clients cannot fill {k} clusters", losses.clients())));
    }
    let clustering = match cfg.clusterer {
        Clusterer::Kmeans => kmeans(losses.embedded.view(), k, &cfg.kmeans, rng)?,
        Clusterer::Agglomerative => agglomerative(losses.embedded.view(), k)?,
    };
    let labels = clustering.labels;
    let groups = clustering_groups(&labels);
    if groups < k {
        log::warn!("clustering produced {groups} of {k} groups; assigning present groups in client-id order");
        let order = groups_by_first_member(&labels);
        return Ok(labels.iter().map(|l| order.iter().position(|g| g == l).expect("present")).collect());
    }
    let perm = match cfg.matching {
        MatchingMode::MinCost => {
            min_cost_matching(&build_cost_matrix(&labels, losses.losses.view(), CostMode::SumLoss)?)
        }
        MatchingMode::Ordered => ordered_assignment(&labels, k)?,
        MatchingMode::Overlap => {
            let mode =
                if previous.iter().any(Option::is_some) { CostMode::Overlap(previous) } else { CostMode::SumLoss };
            min_cost_matching(&build_cost_matrix(&labels, losses.losses.view(), mode)?)
        }
    };
    Ok(labels.iter().map(|&l| perm[l]).collect())
}

fn clustering_groups(labels: &[usize]) -> usize {
    groups_by_first_member(labels).len()
}

/// Each client picks its lowest-loss model (ties to the lowest index).
pub fn ifca_assign<T: Scalar>(losses: &LossMatrix<T>) -> Vec<usize> {
    losses
        .losses
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().fold((0, T::infinity()), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc }).0)
        .collect()
}

/// Uniformly random model per client, keyed by client id.
pub fn random_assignment(client_ids: &[usize], models: usize, seed: u64, round: u64) -> Vec<usize> {
    client_ids
        .iter()
        .map(|&id| stream(seed, Purpose::FirstAssignment, round, id as u64).random_range(0..models))
        .collect()
}
