//! Synthetic federated worlds.
//!
//! Every world is a deterministic function of its [`WorldConfig`] (including
//! the seed). Clients are laid out cluster-major: client `i` belongs to
//! cluster `i / clients_per_cluster`. Training data for round `r` and the
//! held-out test data are drawn from independent streams keyed by client id.

mod csv_io;
mod skew;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{gaussian_matrix, gaussian_vector, normalize, orthonormalize_rows};
use crate::rng::{stream, Purpose};
use crate::task::{ClientDataset, ModelParams, TaskKind, TaskSpec};
use crate::{Error, Result, Scalar};

pub use csv_io::{read_client_csv, write_client_csv};
pub use skew::SkewSpec;

/// Draw budget for the optima rejection sampler.
pub const OPTIMA_DRAW_BUDGET: usize = 10_000;

/// Below this separation optima are proposed in a spherical cap around a
/// random centre instead of uniformly on the sphere.
const CAP_PROPOSAL_BELOW: f64 = 0.5;

fn default_prototype_scale() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub task: TaskKind,
    /// Feature dimension `d`.
    pub dim: usize,
    /// Number of clusters `K`.
    pub clusters: usize,
    pub clients_per_cluster: usize,
    pub samples_per_client: usize,
    /// Held-out samples per client; defaults to `samples_per_client`.
    #[serde(default)]
    pub test_samples_per_client: Option<usize>,
    /// Minimum pairwise separation of the linear optima.
    pub delta: f64,
    /// Standard deviation of the additive noise.
    pub sigma: f64,
    pub fresh_data_per_round: bool,
    /// Label skew of the softmax world.
    #[serde(default)]
    pub skew: Option<SkewSpec>,
    /// Norm of the class-mean prototypes of the softmax world.
    #[serde(default = "default_prototype_scale")]
    pub prototype_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl WorldConfig {
    /// Mixed linear regression world with the given shape.
    pub fn linear(
        dim: usize,
        clusters: usize,
        clients_per_cluster: usize,
        samples_per_client: usize,
        delta: f64,
        sigma: f64,
    ) -> Self {
        WorldConfig {
            task: TaskKind::LinearRegression,
            dim,
            clusters,
            clients_per_cluster,
            samples_per_client,
            test_samples_per_client: None,
            delta,
            sigma,
            fresh_data_per_round: true,
            skew: None,
            prototype_scale: default_prototype_scale(),
            seed: 0,
        }
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec::new(self.task, self.dim)
    }

    pub fn client_count(&self) -> usize {
        self.clusters * self.clients_per_cluster
    }

    pub fn test_samples(&self) -> usize {
        self.test_samples_per_client.unwrap_or(self.samples_per_client)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.clusters == 0 || self.clients_per_cluster == 0 || self.samples_per_client == 0 {
            return Err(Error::invalid("dim, clusters, clients_per_cluster and samples_per_client must be positive"));
        }
        if self.test_samples() == 0 {
            return Err(Error::invalid("test_samples_per_client must be positive"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and non-negative"));
        }
        match self.task {
            TaskKind::LinearRegression => {
                if !(self.delta > 0.0 && self.delta <= 2.0) {
                    return Err(Error::invalid("delta must lie in (0, 2] for unit-norm optima"));
                }
            }
            TaskKind::SoftmaxRegression { classes } => {
                if classes < 2 {
                    return Err(Error::invalid("softmax regression needs at least two classes"));
                }
                if self.dim < classes {
                    return Err(Error::invalid("softmax world needs dim >= classes for one-hot prototypes"));
                }
            }
            TaskKind::LinearAutoencoder { rank } => {
                if rank == 0 || rank >= self.dim {
                    return Err(Error::invalid("autoencoder world needs 0 < rank < dim"));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth of a synthetic world.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueWorld<T> {
    /// Optimal models per cluster; only populated for linear regression.
    pub optima: Vec<ModelParams<T>>,
    pub delta: T,
    pub sigma: T,
    /// True cluster of every client.
    pub assignment: Vec<usize>,
}

impl<T: Scalar> TrueWorld<T> {
    /// Signal-to-noise ratio `delta^2 / sigma^2`.
    pub fn snr(&self) -> T {
        self.delta * self.delta / (self.sigma * self.sigma)
    }

    pub fn clusters(&self) -> usize {
        self.assignment.iter().max().map_or(0, |&k| k + 1)
    }
}

#[derive(Clone, Debug)]
enum Generator {
    Linear,
    Softmax {
        /// Per-client class sampling weights.
        class_weights: Vec<Vec<f64>>,
        /// Per-cluster map from true class to emitted label.
        label_maps: Vec<Vec<usize>>,
    },
    Autoencoder {
        /// Per-cluster `r x d` orthonormal basis rows.
        bases: Vec<Array2<f64>>,
    },
}

/// A generated world: ground truth plus everything needed to draw data.
#[derive(Clone, Debug)]
pub struct SyntheticWorld<T> {
    cfg: WorldConfig,
    truth: TrueWorld<T>,
    generator: Generator,
    degenerate: bool,
}

impl<T: Scalar> SyntheticWorld<T> {
    pub fn build(cfg: &WorldConfig) -> Result<Self> {
        cfg.validate()?;
        let assignment: Vec<usize> = (0..cfg.client_count()).map(|i| i / cfg.clients_per_cluster).collect();
        let mut optima = Vec::new();
        let mut degenerate = false;
        let generator = match cfg.task {
            TaskKind::LinearRegression => {
                let mut rng = stream(cfg.seed, Purpose::Optima, 0, 0);
                optima = sample_optima(cfg.clusters, cfg.dim, cfg.delta, &mut rng)?
                    .into_iter()
                    .map(|v| ModelParams::from_array_unchecked(v.mapv(T::lit)))
                    .collect();
                Generator::Linear
            }
            TaskKind::SoftmaxRegression { classes } => {
                let skew = cfg.skew.as_ref().ok_or_else(|| Error::invalid("softmax world requires a skew"))?;
                let layout = skew.layout(classes, cfg.clusters, cfg.clients_per_cluster, cfg.seed)?;
                degenerate = layout.degenerate;
                if degenerate {
                    log::warn!("all clusters share one data distribution; cluster recovery is undefined");
                }
                Generator::Softmax { class_weights: layout.class_weights, label_maps: layout.label_maps }
            }
            TaskKind::LinearAutoencoder { rank } => {
                let bases = (0..cfg.clusters)
                    .map(|k| {
                        let mut m = gaussian_matrix(rank, cfg.dim, &mut stream(cfg.seed, Purpose::Basis, 0, k as u64));
                        orthonormalize_rows(&mut m).map(|_| m)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Generator::Autoencoder { bases }
            }
        };
        Ok(SyntheticWorld {
            cfg: cfg.clone(),
            truth: TrueWorld { optima, delta: T::lit(cfg.delta), sigma: T::lit(cfg.sigma), assignment },
            generator,
            degenerate,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn truth(&self) -> &TrueWorld<T> {
        &self.truth
    }

    pub fn task(&self) -> TaskSpec {
        self.cfg.task_spec()
    }

    /// True when every cluster shares one data distribution.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Per-cluster subspace bases (autoencoder worlds only), `r x d` rows.
    pub fn subspace_bases(&self) -> Option<&[Array2<f64>]> {
        match &self.generator {
            Generator::Autoencoder { bases } => Some(bases),
            _ => None,
        }
    }

    /// Label map of each cluster (softmax worlds only).
    pub fn label_maps(&self) -> Option<&[Vec<usize>]> {
        match &self.generator {
            Generator::Softmax { label_maps, .. } => Some(label_maps),
            _ => None,
        }
    }

    /// Class sampling weights of each client (softmax worlds only).
    pub fn class_weights(&self) -> Option<&[Vec<f64>]> {
        match &self.generator {
            Generator::Softmax { class_weights, .. } => Some(class_weights),
            _ => None,
        }
    }

    /// Training data for `round`; round 0 is the initial data, and without
    /// fresh data every round reuses it.
    pub fn train_data(&self, round: usize) -> Result<Vec<ClientDataset<T>>> {
        let r = if self.cfg.fresh_data_per_round { round } else { 0 };
        self.draw_all(Purpose::TrainData, r as u64, self.cfg.samples_per_client)
    }

    pub fn test_data(&self) -> Result<Vec<ClientDataset<T>>> {
        self.draw_all(Purpose::TestData, 0, self.cfg.test_samples())
    }

    fn draw_all(&self, purpose: Purpose, round: u64, n: usize) -> Result<Vec<ClientDataset<T>>> {
        (0..self.cfg.client_count())
            .map(|i| self.draw_client(i, &mut stream(self.cfg.seed, purpose, round, i as u64), n))
            .collect()
    }

    fn draw_client<R: Rng + ?Sized>(&self, client: usize, rng: &mut R, n: usize) -> Result<ClientDataset<T>> {
        let d = self.cfg.dim;
        let cluster = self.truth.assignment[client];
        let sigma = self.cfg.sigma;
        match &self.generator {
            Generator::Linear => {
                let x = gaussian_matrix(n, d, rng);
                let theta = self.truth.optima[cluster].values().mapv(|v| v.to_f64_lossy());
                let noise = gaussian_vector(n, rng);
                let y = x.dot(&theta) + noise * sigma;
                ClientDataset::new(client, x.mapv(T::lit), Some(y.mapv(T::lit)))
            }
            Generator::Softmax { class_weights, label_maps } => {
                let picker = WeightedIndex::new(&class_weights[client])
                    .map_err(|e| Error::invalid(format!("class weights: {e}")))?;
                let scale = self.cfg.prototype_scale;
                let mut x = Array2::<f64>::zeros((n, d));
                let mut y = Array1::<f64>::zeros(n);
                for (mut row, label) in x.rows_mut().into_iter().zip(y.iter_mut()) {
                    let class = picker.sample(rng);
                    row.mapv_inplace(|_| rng.sample::<f64, _>(StandardNormal));
                    row[class] += scale;
                    *label = label_maps[cluster][class] as f64;
                }
                ClientDataset::new(client, x.mapv(T::lit), Some(y.mapv(T::lit)))
            }
            Generator::Autoencoder { bases } => {
                let basis = &bases[cluster];
                let z = gaussian_matrix(n, basis.nrows(), rng);
                let noise = gaussian_matrix(n, d, rng);
                let x = z.dot(basis) + noise * sigma;
                ClientDataset::new(client, x.mapv(T::lit), None)
            }
        }
    }
}

/// Draws `k` unit vectors in dimension `d` whose pairwise distances all lie
/// in `[delta, 5 delta]`, by rejection.
///
/// For small `delta` the proposal concentrates the vectors in a cap around a
/// random centre so that typical pairwise distances are about `2 delta`;
/// otherwise vectors are uniform on the sphere.
pub fn sample_optima<R: Rng + ?Sized>(k: usize, d: usize, delta: f64, rng: &mut R) -> Result<Vec<Array1<f64>>> {
    if k == 0 || d == 0 {
        return Err(Error::invalid("need at least one cluster and one dimension"));
    }
    let use_cap = delta < CAP_PROPOSAL_BELOW && d > 1;
    // chord between two cap points with orthogonal tangents is t*sqrt(2)/sqrt(1+t^2)
    let spread = (4.0 * delta * delta / (2.0 - 4.0 * delta * delta)).sqrt();
    for _ in 0..OPTIMA_DRAW_BUDGET {
        let candidate: Vec<Array1<f64>> = if use_cap {
            let mut centre = gaussian_vector(d, rng);
            normalize(&mut centre)?;
            (0..k)
                .map(|_| {
                    let mut u = gaussian_vector(d, rng);
                    let along = u.dot(&centre);
                    u.scaled_add(-along, &centre);
                    normalize(&mut u)?;
                    let mut v = &centre + &(u * spread);
                    normalize(&mut v)?;
                    Ok(v)
                })
                .collect::<Result<_>>()?
        } else {
            (0..k)
                .map(|_| {
                    let mut v = gaussian_vector(d, rng);
                    normalize(&mut v).map(|_| v)
                })
                .collect::<Result<_>>()?
        };
        let ok = (0..k).all(|i| {
            (i + 1..k).all(|j| {
                let diff = &candidate[i] - &candidate[j];
                let dist = diff.dot(&diff).sqrt();
                dist >= delta && dist <= 5.0 * delta
            })
        });
        if ok {
            return Ok(candidate);
        }
    }
    Err(Error::Infeasible(format!(
        "no {k} unit vectors in dimension {d} with pairwise distances in [{delta}, {}] after {OPTIMA_DRAW_BUDGET} draws",
        5.0 * delta
    )))
}

/// Mixed linear regression world and its round-0 training data.
pub fn gen_mixed_linear<T: Scalar>(cfg: &WorldConfig) -> Result<(TrueWorld<T>, Vec<ClientDataset<T>>)> {
    if cfg.task != TaskKind::LinearRegression {
        return Err(Error::invalid("gen_mixed_linear needs the linear regression task"));
    }
    let world = SyntheticWorld::build(cfg)?;
    let data = world.train_data(0)?;
    Ok((world.truth, data))
}

/// Fresh i.i.d. training data for `round`.
pub fn resample_round_data<T: Scalar>(world: &SyntheticWorld<T>, round: usize) -> Result<Vec<ClientDataset<T>>> {
    if !world.cfg.fresh_data_per_round {
        return Err(Error::invalid("world does not draw fresh data per round"));
    }
    world.train_data(round)
}

/// Softmax world with the given skew and its round-0 training data.
pub fn gen_softmax_world<T: Scalar>(
    cfg: &WorldConfig,
    skew: SkewSpec,
) -> Result<(SyntheticWorld<T>, Vec<ClientDataset<T>>)> {
    if !matches!(cfg.task, TaskKind::SoftmaxRegression { .. }) {
        return Err(Error::invalid("gen_softmax_world needs the softmax regression task"));
    }
    let mut cfg = cfg.clone();
    cfg.skew = Some(skew);
    let world = SyntheticWorld::build(&cfg)?;
    let data = world.train_data(0)?;
    Ok((world, data))
}

/// Autoencoder world (cluster-specific principal subspaces) and its data.
pub fn gen_autoencoder_world<T: Scalar>(cfg: &WorldConfig) -> Result<(SyntheticWorld<T>, Vec<ClientDataset<T>>)> {
    if !matches!(cfg.task, TaskKind::LinearAutoencoder { .. }) {
        return Err(Error::invalid("gen_autoencoder_world needs the linear autoencoder task"));
    }
    let world = SyntheticWorld::build(cfg)?;
    let data = world.train_data(0)?;
    Ok((world, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr_cfg() -> WorldConfig {
        let mut cfg = WorldConfig::linear(50, 5, 5, 1000, 1.0, 0.05);
        cfg.seed = 11;
        cfg
    }

    fn check_optima(truth: &TrueWorld<f64>, delta: f64) {
        for (i, a) in truth.optima.iter().enumerate() {
            assert!((a.norm() - 1.0).abs() < 1e-9);
            for b in &truth.optima[i + 1..] {
                let dist = a.distance(b);
                assert!(dist >= delta && dist <= 5.0 * delta, "distance {dist}");
            }
        }
    }

    #[test]
    fn mixed_linear_world_satisfies_generator_contract() {
        let (truth, data) = gen_mixed_linear::<f64>(&lr_cfg()).unwrap();
        assert_eq!(truth.optima.len(), 5);
        check_optima(&truth, 1.0);
        assert_eq!(data.len(), 25);
        assert!(data.iter().all(|c| c.len() == 1000 && c.dim() == 50));
        assert_eq!(truth.assignment[7], 1);
        assert_eq!(truth.snr(), 1.0 / (0.05 * 0.05));
    }

    #[test]
    fn small_separations_are_feasible() {
        for delta in [0.0003, 0.01, 0.1, 0.3, 0.6, 1.2] {
            let mut cfg = lr_cfg();
            cfg.delta = delta;
            let world = SyntheticWorld::<f64>::build(&cfg).unwrap();
            check_optima(world.truth(), delta);
        }
    }

    #[test]
    fn single_cluster_world() {
        let mut cfg = lr_cfg();
        cfg.clusters = 1;
        let (truth, data) = gen_mixed_linear::<f64>(&cfg).unwrap();
        assert_eq!(truth.optima.len(), 1);
        assert!(truth.assignment.iter().all(|&k| k == 0));
        assert_eq!(data.len(), 5);
    }

    #[test]
    fn infeasible_separation_reports_error() {
        let mut cfg = lr_cfg();
        cfg.dim = 2;
        cfg.clusters = 5;
        cfg.delta = 1.9;
        assert!(matches!(SyntheticWorld::<f64>::build(&cfg), Err(Error::Infeasible(_))));
        cfg.delta = 2.5;
        assert!(SyntheticWorld::<f64>::build(&cfg).is_err());
    }

    #[test]
    fn rounds_replay_and_differ() {
        let world = SyntheticWorld::<f64>::build(&lr_cfg()).unwrap();
        let a = resample_round_data(&world, 3).unwrap();
        assert_eq!(a, resample_round_data(&world, 3).unwrap());
        assert_ne!(a[0].features, resample_round_data(&world, 4).unwrap()[0].features);
        assert_ne!(a[0].features, world.test_data().unwrap()[0].features);

        let mut fixed = lr_cfg();
        fixed.fresh_data_per_round = false;
        let world = SyntheticWorld::<f64>::build(&fixed).unwrap();
        assert_eq!(world.train_data(0).unwrap(), world.train_data(9).unwrap());
        assert!(resample_round_data(&world, 1).is_err());
    }

    #[test]
    fn autoencoder_world_rank_checks() {
        let mut cfg = lr_cfg();
        cfg.task = TaskKind::LinearAutoencoder { rank: 50 };
        assert!(SyntheticWorld::<f64>::build(&cfg).is_err());
        cfg.task = TaskKind::LinearAutoencoder { rank: 3 };
        cfg.dim = 8;
        cfg.samples_per_client = 20;
        let (world, data) = gen_autoencoder_world::<f64>(&cfg).unwrap();
        assert!(data[0].targets.is_none());
        assert_eq!(world.subspace_bases().unwrap().len(), 5);
        let (_, again) = gen_autoencoder_world::<f64>(&cfg).unwrap();
        assert_eq!(data, again);
    }
}
