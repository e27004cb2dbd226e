use ndarray::{concatenate, Array2, ArrayView2, Axis};

use super::assign::init_models;
use super::config::FederationConfig;
use crate::cluster::{kmeans, KMeansParams};
use crate::rng::{stream, Purpose};
use crate::task::{local_update, ClientDataset, LocalTraining, ModelParams, TaskSpec};
use crate::{Error, Result, Scalar};

/// Trains every client alone for `rounds x local_epochs` epochs from the
/// same initial model.
pub fn run_local_only<T: Scalar>(
    clients: &[ClientDataset<T>],
    task: &TaskSpec,
    cfg: &FederationConfig,
) -> Result<Vec<ModelParams<T>>> {
    cfg.validate()?;
    let init = init_models(cfg.init, 1, task, cfg.seed)?.remove(0);
    let schedule = LocalTraining { lr: T::lit(cfg.lr), epochs: cfg.local_epochs, batch_size: cfg.batch_size };
    clients
        .iter()
        .map(|c| {
            (0..cfg.rounds).try_fold(init.clone(), |model, t| {
                let mut rng = stream(cfg.seed, Purpose::LocalUpdate, t as u64, c.client_id as u64);
                local_update(task, &model, c, &schedule, &mut rng)
            })
        })
        .collect()
}

/// One-shot clustering of clients by their raw features.
///
/// Every client runs k-means with `local_centers` centers (fewer if it has
/// fewer rows), the server clusters all pooled centers into `k` groups and a
/// client takes the group holding most of its centers (ties to the lower
/// label).
pub fn run_kfed_lite<T: Scalar>(
    clients: &[ClientDataset<T>],
    k: usize,
    local_centers: usize,
    params: &KMeansParams,
    seed: u64,
) -> Result<Vec<usize>> {
    if k == 0 || local_centers == 0 {
        return Err(Error::invalid("k and local_centers must be at least 1"));
    }
    if clients.is_empty() {
        return Err(Error::invalid("no clients to cluster"));
    }
    let mut owners = Vec::new();
    let mut blocks: Vec<Array2<T>> = Vec::with_capacity(clients.len());
    for (pos, c) in clients.iter().enumerate() {
        if c.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut rng = stream(seed, Purpose::KFedLocal, 0, c.client_id as u64);
        let local = kmeans(c.features.view(), local_centers.min(c.len()), params, &mut rng)?;
        let centers = local.centers.expect("k-means returns centers");
        owners.extend(std::iter::repeat_n(pos, centers.nrows()));
        blocks.push(centers);
    }
    let views: Vec<ArrayView2<'_, T>> = blocks.iter().map(|b| b.view()).collect();
    let pooled = concatenate(Axis(0), &views).map_err(|_| Error::invalid("clients disagree on feature dimension"))?;
    let mut rng = stream(seed, Purpose::KFedServer, 0, 0);
    let server = kmeans(pooled.view(), k, params, &mut rng)?;
    let mut votes = vec![vec![0usize; k]; clients.len()];
    for (&owner, &label) in owners.iter().zip(&server.labels) {
        votes[owner][label] += 1;
    }
    Ok(votes
        .iter()
        .map(|v| v.iter().enumerate().fold((0, 0), |best, (l, &c)| if c > best.1 { (l, c) } else { best }).0)
        .collect())
}
