//! The federation loop shared by CLoVE and the baselines.

mod aggregate;
mod assign;
mod baselines;
mod config;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::aggregate;
pub use assign::{clove_assign, collect_loss_matrix, ifca_assign, init_models, random_assignment, LossMatrix};
pub use baselines::{run_kfed_lite, run_local_only};
pub use config::{
    proximal_step_size, Algorithm, Averaging, Clusterer, Embedding, FederationConfig, FirstRound, InitPolicy,
    MatchingMode,
};

use crate::datagen::{SyntheticWorld, TrueWorld};
use crate::rng::{stream, Purpose};
use crate::task::{accuracy, gradient, local_update, loss, ClientDataset, LocalTraining, ModelParams, TaskSpec};
use crate::{metrics, Error, Result, Scalar};

/// Telemetry of one federated round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    /// Model each client was assigned to this round; `None` when it did not
    /// participate.
    pub assignment: Vec<Option<usize>>,
    /// Participating clients per model.
    pub group_sizes: Vec<usize>,
    /// Agreement of this round's assignment with the true clusters, over
    /// participating clients. `None` without ground truth.
    pub ari: Option<f64>,
    /// Mean over clients of the test loss of the model each client last used.
    pub mean_test_loss: f64,
    pub test_accuracy: Option<f64>,
    /// Distance of every model to its matched optimum, when optima are known.
    pub model_distances: Option<Vec<f64>>,
    pub wall_ms: u64,
}

impl RoundRecord {
    pub fn max_model_distance(&self) -> Option<f64> {
        self.model_distances.as_ref().map(|d| d.iter().copied().fold(0.0, f64::max))
    }

    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &RoundRecord) -> bool {
        RoundRecord { wall_ms: 0, ..self.clone() } == RoundRecord { wall_ms: 0, ..other.clone() }
    }
}

#[derive(Clone, Debug)]
enum TrainSource<T> {
    Fixed(Arc<Vec<ClientDataset<T>>>),
    Fresh(Box<SyntheticWorld<T>>),
}

/// State of a running federation.
#[derive(Clone, Debug)]
pub struct Federation<T> {
    cfg: FederationConfig,
    task: TaskSpec,
    train: TrainSource<T>,
    test: Vec<ClientDataset<T>>,
    truth: Option<TrueWorld<T>>,
    clients: usize,
    models: Vec<ModelParams<T>>,
    assignment: Vec<Option<usize>>,
    kfed_labels: Option<Vec<usize>>,
    round: usize,
    records: Vec<RoundRecord>,
}

impl<T: Scalar> Federation<T> {
    /// Federation over fixed client data. Client ids must be `0..M` in order;
    /// `test` is either empty (evaluate on training data) or one set per
    /// client.
    pub fn new(
        cfg: FederationConfig,
        task: TaskSpec,
        train: Vec<ClientDataset<T>>,
        test: Vec<ClientDataset<T>>,
        truth: Option<TrueWorld<T>>,
    ) -> Result<Self> {
        check_ids(&train)?;
        Self::build(cfg, task, train.len(), TrainSource::Fixed(Arc::new(train)), test, truth)
    }

    /// Federation over a synthetic world, drawing fresh training data every
    /// round when the world asks for it.
    pub fn from_world(cfg: FederationConfig, world: SyntheticWorld<T>) -> Result<Self> {
        let task = world.task();
        let clients = world.config().client_count();
        let test = world.test_data()?;
        let truth = Some(world.truth().clone());
        let train = if world.config().fresh_data_per_round {
            TrainSource::Fresh(Box::new(world))
        } else {
            TrainSource::Fixed(Arc::new(world.train_data(0)?))
        };
        Self::build(cfg, task, clients, train, test, truth)
    }

    fn build(
        cfg: FederationConfig,
        task: TaskSpec,
        clients: usize,
        train: TrainSource<T>,
        test: Vec<ClientDataset<T>>,
        truth: Option<TrueWorld<T>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if clients == 0 {
            return Err(Error::invalid("federation needs at least one client"));
        }
        if !test.is_empty() {
            if test.len() != clients {
                return Err(Error::DimensionMismatch { what: "test sets", expected: clients, found: test.len() });
            }
            check_ids(&test)?;
        }
        if let Some(t) = &truth {
            if t.assignment.len() != clients {
                return Err(Error::DimensionMismatch {
                    what: "true assignment",
                    expected: clients,
                    found: t.assignment.len(),
                });
            }
        }
        let (models, assignment) = match cfg.algorithm {
            Algorithm::LocalOnly => {
                let init = init_models(cfg.init, 1, &task, cfg.seed)?.remove(0);
                (vec![init; clients], (0..clients).map(Some).collect())
            }
            _ => (init_models(cfg.init, cfg.model_count(), &task, cfg.seed)?, vec![None; clients]),
        };
        Ok(Federation {
            cfg,
            task,
            train,
            test,
            truth,
            clients,
            models,
            assignment,
            kfed_labels: None,
            round: 0,
            records: Vec::new(),
        })
    }

    pub fn config(&self) -> &FederationConfig {
        &self.cfg
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn models(&self) -> &[ModelParams<T>] {
        &self.models
    }

    /// Most recent model of every client (`None` before its first round).
    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn truth(&self) -> Option<&TrueWorld<T>> {
        self.truth.as_ref()
    }

    /// Completed rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<RoundRecord> {
        self.records
    }

    /// Runs the remaining configured rounds.
    pub fn run(&mut self) -> Result<&[RoundRecord]> {
        while self.round < self.cfg.rounds {
            self.run_round()?;
        }
        Ok(&self.records)
    }

    /// Training data of the round about to run.
    pub fn round_data(&self) -> Result<Arc<Vec<ClientDataset<T>>>> {
        match &self.train {
            TrainSource::Fixed(d) => Ok(Arc::clone(d)),
            TrainSource::Fresh(w) => Ok(Arc::new(w.train_data(self.round)?)),
        }
    }

    fn participants(&self) -> Vec<usize> {
        let f = self.cfg.participation_fraction;
        if f >= 1.0 {
            return (0..self.clients).collect();
        }
        let take = ((f * self.clients as f64).ceil() as usize).clamp(1, self.clients);
        let mut rng = stream(self.cfg.seed, Purpose::Participation, self.round as u64, 0);
        let mut picked = rand::seq::index::sample(&mut rng, self.clients, take).into_vec();
        picked.sort_unstable();
        picked
    }

    /// Broadcast, assignment, local computation and aggregation for one round.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let start = Instant::now();
        let t = self.round;
        let data = self.round_data()?;
        let data = data.as_slice();
        let ids = self.participants();
        let chosen = self.assign(data, &ids)?;

        let lr = T::lit(self.cfg.lr);
        let schedule = LocalTraining { lr, epochs: self.cfg.local_epochs, batch_size: self.cfg.batch_size };
        let (task, models, averaging, seed) = (&self.task, &self.models, self.cfg.averaging, self.cfg.seed);
        let payloads: Vec<(usize, Array1<T>)> = ids
            .par_iter()
            .zip(chosen.par_iter())
            .map(|(&id, &m)| {
                let payload = match averaging {
                    Averaging::Model => {
                        let mut rng = stream(seed, Purpose::LocalUpdate, t as u64, id as u64);
                        local_update(task, &models[m], &data[id], &schedule, &mut rng)?.into_inner()
                    }
                    Averaging::Gradient => gradient(task, &models[m], &data[id])?,
                };
                Ok((id, payload))
            })
            .collect::<Result<_>>()?;
        let payloads: BTreeMap<usize, Array1<T>> = payloads.into_iter().collect();
        let assignment: BTreeMap<usize, usize> = ids.iter().copied().zip(chosen.iter().copied()).collect();
        let counts: BTreeMap<usize, usize> = ids.iter().map(|&id| (id, data[id].len())).collect();
        self.models = aggregate(averaging, &self.models, &payloads, &assignment, &counts, lr)?;

        let mut round_assignment = vec![None; self.clients];
        for (&id, &m) in &assignment {
            round_assignment[id] = Some(m);
            self.assignment[id] = Some(m);
        }
        let mut group_sizes = vec![0; self.models.len()];
        for &m in &chosen {
            group_sizes[m] += 1;
        }
        let ari = match &self.truth {
            Some(truth) => {
                let planted: Vec<usize> = ids.iter().map(|&id| truth.assignment[id]).collect();
                Some(metrics::ari(&planted, &chosen)?)
            }
            None => None,
        };
        let (mean_test_loss, test_accuracy) = self.evaluate(data)?;
        let model_distances = match &self.truth {
            Some(truth) if !truth.optima.is_empty() && truth.optima.len() == self.models.len() => {
                let (d, _) = metrics::model_distances(&self.models, &truth.optima)?;
                Some(d.into_iter().map(|v| v.to_f64_lossy()).collect())
            }
            _ => None,
        };
        self.round += 1;
        let record = RoundRecord {
            round: self.round,
            assignment: round_assignment,
            group_sizes,
            ari,
            mean_test_loss,
            test_accuracy,
            model_distances,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        self.records.push(record.clone());
        Ok(record)
    }

    fn assign(&mut self, data: &[ClientDataset<T>], ids: &[usize]) -> Result<Vec<usize>> {
        let t = self.round;
        let k = self.models.len();
        let random_first = t == 0 && self.cfg.first_round_assignment == FirstRound::Random;
        let participating = || ids.iter().map(|&id| &data[id]).collect::<Vec<_>>();
        match self.cfg.algorithm {
            Algorithm::FedAvg => Ok(vec![0; ids.len()]),
            Algorithm::LocalOnly => Ok(ids.to_vec()),
            Algorithm::KFedLite => {
                if self.kfed_labels.is_none() {
                    let local = self.cfg.kfed_local_centers.unwrap_or(k);
                    self.kfed_labels = Some(run_kfed_lite(data, k, local, &self.cfg.kmeans, self.cfg.seed)?);
                }
                let labels = self.kfed_labels.as_ref().expect("just set");
                Ok(ids.iter().map(|&id| labels[id]).collect())
            }
            Algorithm::Clove | Algorithm::Ifca if random_first => Ok(random_assignment(ids, k, self.cfg.seed, 0)),
            Algorithm::Clove => {
                let lm = collect_loss_matrix(&self.models, &participating(), &self.task, self.cfg.embedding)?;
                let previous: Vec<Option<usize>> = ids.iter().map(|&id| self.assignment[id]).collect();
                let mut rng = stream(self.cfg.seed, Purpose::Clustering, t as u64, 0);
                clove_assign(&lm, &self.cfg, &previous, &mut rng)
            }
            Algorithm::Ifca => {
                let lm = collect_loss_matrix(&self.models, &participating(), &self.task, Embedding::Loss)?;
                Ok(ifca_assign(&lm))
            }
        }
    }

    /// Mean test loss (and accuracy) over clients that have a model, each on
    /// the model it last used. Falls back to `train` without test sets.
    fn evaluate(&self, train: &[ClientDataset<T>]) -> Result<(f64, Option<f64>)> {
        let sets = if self.test.is_empty() { train } else { &self.test };
        let scored: Vec<(f64, Option<f64>)> = sets
            .par_iter()
            .filter_map(|d| self.assignment[d.client_id].map(|m| (d, m)))
            .map(|(d, m)| {
                let model = &self.models[m];
                Ok((
                    loss(&self.task, model, d)?.to_f64_lossy(),
                    accuracy(&self.task, model, d)?.map(|a| a.to_f64_lossy()),
                ))
            })
            .collect::<Result<_>>()?;
        if scored.is_empty() {
            return Ok((f64::NAN, None));
        }
        let n = scored.len() as f64;
        let mean_loss = scored.iter().map(|s| s.0).sum::<f64>() / n;
        let acc = scored.iter().map(|s| s.1).sum::<Option<f64>>().map(|a| a / n);
        Ok((mean_loss, acc))
    }
}

fn check_ids<T>(data: &[ClientDataset<T>]) -> Result<()> {
    match data.iter().enumerate().find(|(i, d)| d.client_id != *i) {
        Some((i, d)) => Err(Error::invalid(format!("client at position {i} has id {}", d.client_id))),
        None => Ok(()),
    }
}
