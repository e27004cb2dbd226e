//! Finite-difference and Monte Carlo references.
#![allow(dead_code)]

use clove::datagen::gen_mixed_linear;
use clove::rng::{stream, Purpose, StreamRng};
use clove::task::{gradient, loss, ClientDataset, ModelParams, TaskKind, TaskSpec};
use clove::WorldConfig;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Relative error between the analytic gradient and central differences.
pub fn gradient_rel_error(task: &TaskSpec, params: &ModelParams<f64>, data: &ClientDataset<f64>) -> f64 {
    let analytic = gradient(task, params, data).unwrap();
    let h = 1e-6;
    let numeric = Array1::from_shape_fn(params.len(), |j| {
        let mut up = params.values().clone();
        let mut down = params.values().clone();
        up[j] += h;
        down[j] -= h;
        let f = |v: Array1<f64>| loss(task, &ModelParams::new(v).unwrap(), data).unwrap();
        (f(up) - f(down)) / (2.0 * h)
    });
    let diff = (&analytic - &numeric).mapv(|v| v * v).sum().sqrt();
    let scale = analytic.dot(&analytic).sqrt().max(numeric.dot(&numeric).sqrt()).max(1e-8);
    diff / scale
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// A random task instance: parameters and a small dataset of that task.
pub fn random_instance(kind: TaskKind, seed: u64) -> (TaskSpec, ModelParams<f64>, ClientDataset<f64>) {
    let mut rng = stream(seed, Purpose::Basis, 0, 0);
    let dim = rng.random_range(2..7);
    let kind = match kind {
        TaskKind::SoftmaxRegression { .. } => TaskKind::SoftmaxRegression { classes: rng.random_range(2..5) },
        TaskKind::LinearAutoencoder { .. } => TaskKind::LinearAutoencoder { rank: rng.random_range(1..dim) },
        k => k,
    };
    let task = TaskSpec::new(kind, dim);
    let n = rng.random_range(3..20);
    let x = Array2::from_shape_fn((n, dim), |_| normal(&mut rng));
    let targets = match kind {
        TaskKind::LinearRegression => Some(Array1::from_shape_fn(n, |_| normal(&mut rng))),
        TaskKind::SoftmaxRegression { classes } => {
            Some(Array1::from_shape_fn(n, |_| rng.random_range(0..classes) as f64))
        }
        TaskKind::LinearAutoencoder { .. } => None,
    };
    let params = ModelParams::new(Array1::from_shape_fn(task.param_dim(), |_| 0.5 * normal(&mut rng))).unwrap();
    (task, params, ClientDataset::new(0, x, targets).unwrap())
}

pub struct ChiSample {
    pub mean: f64,
    pub variance: f64,
    /// `alpha (1 - 1/(4n))`
    pub predicted_mean: f64,
    pub alpha: f64,
}

/// Moments of sqrt(loss) of the zero model over `clients` clients of a
/// one-cluster world.
pub fn sqrt_loss_sample(clients: usize, n: usize, sigma: f64, seed: u64) -> ChiSample {
    let mut cfg = WorldConfig::linear(8, 1, clients, n, 1.0, sigma);
    cfg.seed = seed;
    let (truth, data) = gen_mixed_linear::<f64>(&cfg).unwrap();
    let task = TaskSpec::linear(8);
    let zero = ModelParams::zeros(8);
    let roots: Vec<f64> = data.iter().map(|c| loss(&task, &zero, c).unwrap().sqrt()).collect();
    let mean = roots.iter().sum::<f64>() / clients as f64;
    let variance = roots.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (clients - 1) as f64;
    let alpha = (truth.optima[0].values().dot(truth.optima[0].values()) + sigma * sigma).sqrt();
    ChiSample { mean, variance, predicted_mean: alpha * (1.0 - 1.0 / (4.0 * n as f64)), alpha }
}
