use serde::{Deserialize, Serialize};

use crate::cluster::KMeansParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "clove")]
    Clove,
    #[serde(rename = "ifca")]
    Ifca,
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "local_only")]
    LocalOnly,
    #[serde(rename = "kfed_lite")]
    KFedLite,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Clove => "clove",
            Algorithm::Ifca => "ifca",
            Algorithm::FedAvg => "fedavg",
            Algorithm::LocalOnly => "local_only",
            Algorithm::KFedLite => "kfed_lite",
        }
    }
}

/// How client work is combined per model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Clients run local epochs; the server averages the resulting models.
    Model,
    /// Clients send one gradient; the server averages and takes one step.
    Gradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    Loss,
    SqrtLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clusterer {
    Kmeans,
    Agglomerative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMode {
    /// Hungarian matching on summed cluster losses.
    MinCost,
    /// Clusters ordered by smallest client id (no matching).
    Ordered,
    /// Hungarian matching on overlap with last round's model groups.
    Overlap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    Orthonormal,
    SameRandom,
    IndependentRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstRound {
    /// Assign from the first round's loss vectors.
    Evaluate,
    /// Assign every client to a uniformly random model.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub algorithm: Algorithm,
    /// Number of models `K` (forced to 1 for FedAvg).
    pub models: usize,
    pub rounds: usize,
    /// Local epochs per round (model averaging only).
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Local learning rate for model averaging, server step for gradient
    /// averaging.
    pub lr: f64,
    pub averaging: Averaging,
    pub embedding: Embedding,
    pub clusterer: Clusterer,
    pub matching: MatchingMode,
    pub init: InitPolicy,
    pub first_round_assignment: FirstRound,
    pub participation_fraction: f64,
    pub kmeans: KMeansParams,
    /// Local centers per client for k-FED-lite; defaults to `models`.
    pub kfed_local_centers: Option<usize>,
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            algorithm: Algorithm::Clove,
            models: 1,
            rounds: 100,
            local_epochs: 1,
            batch_size: 100,
            lr: 1e-3,
            averaging: Averaging::Model,
            embedding: Embedding::Loss,
            clusterer: Clusterer::Kmeans,
            matching: MatchingMode::MinCost,
            init: InitPolicy::Orthonormal,
            first_round_assignment: FirstRound::Evaluate,
            participation_fraction: 1.0,
            kmeans: KMeansParams::default(),
            kfed_local_centers: None,
            seed: 0,
        }
    }
}

/// Server step size for gradient averaging that keeps one matched round
/// within a quarter of the separation: `(1 - delta / 12) / 2`.
pub fn proximal_step_size(delta: f64) -> f64 {
    0.5 * (1.0 - delta / 12.0)
}

impl FederationConfig {
    /// Models actually trained.
    pub fn model_count(&self) -> usize {
        match self.algorithm {
            Algorithm::FedAvg => 1,
            _ => self.models,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("rounds, local_epochs and batch_size must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("lr must be positive"));
        }
        if self.models == 0 {
            return Err(Error::invalid("models must be at least 1"));
        }
        if !(self.participation_fraction > 0.0 && self.participation_fraction <= 1.0) {
            return Err(Error::invalid("participation_fraction must lie in (0, 1]"));
        }
        if self.kmeans.max_iter == 0 || !(self.kmeans.tol >= 0.0) {
            return Err(Error::invalid("kmeans needs max_iter >= 1 and tol >= 0"));
        }
        if self.kfed_local_centers == Some(0) {
            return Err(Error::invalid("kfed_local_centers must be at least 1"));
        }
        Ok(())
    }
}
