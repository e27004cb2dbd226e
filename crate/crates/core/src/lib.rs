//! Clustered federated learning with loss-vector embeddings.
//!
//! Clients are embedded by the vector of their empirical losses on every
//! current model; the server clusters those vectors, maps client clusters to
//! models with a min-cost matching and then averages updates per model.
//! IFCA, FedAvg, local-only training and a one-shot k-FED-style clustering
//! are provided as baselines, together with a synthetic mixed linear
//! regression world for checking recovery and convergence behaviour.
//!
//! All numerical code is generic over a [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`, which is what the experiment
//! driver uses.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cluster;
pub mod datagen;
pub mod engine;
mod error;
mod linalg;
pub mod matching;
pub mod metrics;
pub mod rng;
mod scalar;
pub mod task;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use cluster::ClusterResult;
pub use datagen::{SkewSpec, SyntheticWorld, TrueWorld, WorldConfig};
pub use engine::{
    Algorithm, Averaging, Clusterer, Embedding, FederationConfig, FirstRound, InitPolicy, LossMatrix, MatchingMode,
    RoundRecord,
};
pub use task::{ClientDataset, ModelParams, TaskKind, TaskSpec};

/// Model parameters in double precision.
pub type Params = ModelParams<f64>;
/// Client dataset in double precision.
pub type Dataset = ClientDataset<f64>;
/// Ground truth of a double-precision synthetic world.
pub type World = TrueWorld<f64>;
/// Federation state in double precision.
pub type Federation = engine::Federation<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type Params = super::ModelParams<f32>;
    pub type Dataset = super::ClientDataset<f32>;
    pub type World = super::TrueWorld<f32>;
    pub type Federation = super::engine::Federation<f32>;
}
