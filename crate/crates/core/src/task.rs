//! Learning tasks: empirical loss, analytic gradient and local training.
//!
//! Three tasks are supported, all linear in their parameters so that every
//! gradient is exact and cheap:
//!
//! * linear regression, `p = d`, mean squared residual;
//! * softmax regression over `C` classes, `p = d * C` (row-major `d x C`
//!   weight matrix, no bias), mean cross-entropy;
//! * rank-`r` linear autoencoder with tied weights `W` (`d x r`, row-major),
//!   reconstruction `W W^T x`, mean squared reconstruction error.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LinearRegression,
    SoftmaxRegression { classes: usize },
    LinearAutoencoder { rank: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Feature dimension `d`.
    pub dim: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, dim: usize) -> Self {
        TaskSpec { kind, dim }
    }

    pub fn linear(dim: usize) -> Self {
        Self::new(TaskKind::LinearRegression, dim)
    }

    /// Length of the flat parameter vector.
    pub fn param_dim(&self) -> usize {
        match self.kind {
            TaskKind::LinearRegression => self.dim,
            TaskKind::SoftmaxRegression { classes } => self.dim * classes,
            TaskKind::LinearAutoencoder { rank } => self.dim * rank,
        }
    }

    pub fn is_supervised(&self) -> bool {
        !matches!(self.kind, TaskKind::LinearAutoencoder { .. })
    }

    fn check(&self, params: &ModelParams<impl Scalar>, data: &ClientDataset<impl Scalar>) -> Result<()> {
        if params.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                what: "model parameters",
                expected: self.param_dim(),
                found: params.len(),
            });
        }
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch { what: "feature columns", expected: self.dim, found: data.dim() });
        }
        if data.targets.is_some() != self.is_supervised() {
            return Err(Error::invalid(if self.is_supervised() {
                "supervised task needs targets"
            } else {
                "unsupervised task takes no targets"
            }));
        }
        Ok(())
    }
}

/// Flat parameter vector of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T>(Array1<T>);

impl<T: Scalar> ModelParams<T> {
    pub fn new(values: Array1<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(ModelParams(values))
    }

    pub fn from_vec(values: Vec<T>) -> Result<Self> {
        Self::new(Array1::from(values))
    }

    pub fn zeros(len: usize) -> Self {
        ModelParams(Array1::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &Array1<T> {
        &self.0
    }

    pub fn as_slice(&self) -> &[T] {
        self.0.as_slice().expect("parameter vectors are contiguous")
    }

    pub fn into_inner(self) -> Array1<T> {
        self.0
    }

    pub fn norm(&self) -> T {
        self.0.dot(&self.0).sqrt()
    }

    pub fn distance(&self, other: &Self) -> T {
        Zip::from(&self.0).and(&other.0).fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b)).sqrt()
    }

    pub(crate) fn from_array_unchecked(values: Array1<T>) -> Self {
        ModelParams(values)
    }

    fn as_matrix(&self, rows: usize, cols: usize) -> ArrayView2<'_, T> {
        self.0.view().into_shape_with_order((rows, cols)).expect("parameter length checked against task")
    }
}

/// One client's local data: `n x d` features and, for supervised tasks,
/// `n` targets (class indices stored as reals for softmax regression).
#[derive(Clone, Debug, PartialEq)]
pub struct ClientDataset<T> {
    pub client_id: usize,
    pub features: Array2<T>,
    pub targets: Option<Array1<T>>,
}

impl<T: Scalar> ClientDataset<T> {
    pub fn new(client_id: usize, features: Array2<T>, targets: Option<Array1<T>>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if let Some(t) = &targets {
            if t.len() != features.nrows() {
                return Err(Error::DimensionMismatch { what: "targets", expected: features.nrows(), found: t.len() });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("targets"));
            }
        }
        Ok(ClientDataset { client_id, features, targets })
    }

    /// Number of samples `n_i`.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        ClientDataset {
            client_id: self.client_id,
            features: self.features.select(Axis(0), idx),
            targets: self.targets.as_ref().map(|t| t.select(Axis(0), idx)),
        }
    }
}

fn class_index<T: Scalar>(label: T, classes: usize) -> Result<usize> {
    match label.to_usize() {
        Some(c) if c < classes && T::from_count(c) == label => Ok(c),
        _ => Err(Error::invalid(format!("label {label} is not a class index below {classes}"))),
    }
}

/// Row-wise softmax probabilities and the mean cross-entropy.
fn softmax_forward<T: Scalar>(w: ArrayView2<'_, T>, data: &ClientDataset<T>, classes: usize) -> Result<(Array2<T>, T)> {
    let targets = data.targets.as_ref().expect("checked by TaskSpec");
    let mut probs = data.features.dot(&w);
    let mut total = T::zero();
    for (mut row, &y) in probs.rows_mut().into_iter().zip(targets.iter()) {
        let label = class_index(y, classes)?;
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let z: T = row.sum();
        total += z.ln() - row[label].ln();
        row.mapv_inplace(|v| v / z);
    }
    Ok((probs, total / T::from_count(data.len())))
}

/// Mean per-sample loss of `params` on `data`.
pub fn loss<T: Scalar>(task: &TaskSpec, params: &ModelParams<T>, data: &ClientDataset<T>) -> Result<T> {
    task.check(params, data)?;
    let n = T::from_count(data.len());
    let value = match task.kind {
        TaskKind::LinearRegression => {
            let resid = data.features.dot(params.values()) - data.targets.as_ref().expect("supervised");
            resid.dot(&resid) / n
        }
        TaskKind::SoftmaxRegression { classes } => {
            softmax_forward(params.as_matrix(task.dim, classes), data, classes)?.1
        }
        TaskKind::LinearAutoencoder { rank } => {
            let w = params.as_matrix(task.dim, rank);
            let err = &data.features - &data.features.dot(&w).dot(&w.t());
            err.iter().map(|&e| e * e).sum::<T>() / n
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok(value.max(T::zero()))
}

/// Analytic gradient of [`loss`] with respect to the flat parameters.
pub fn gradient<T: Scalar>(task: &TaskSpec, params: &ModelParams<T>, data: &ClientDataset<T>) -> Result<Array1<T>> {
    task.check(params, data)?;
    let n = T::from_count(data.len());
    let x = &data.features;
    let grad = match task.kind {
        TaskKind::LinearRegression => {
            let resid = x.dot(params.values()) - data.targets.as_ref().expect("supervised");
            x.t().dot(&resid) * (T::lit(2.0) / n)
        }
        TaskKind::SoftmaxRegression { classes } => {
            let (mut probs, _) = softmax_forward(params.as_matrix(task.dim, classes), data, classes)?;
            let targets = data.targets.as_ref().expect("supervised");
            for (mut row, &y) in probs.rows_mut().into_iter().zip(targets.iter()) {
                row[class_index(y, classes)?] -= T::one();
            }
            flatten(x.t().dot(&probs) / n)
        }
        TaskKind::LinearAutoencoder { rank } => {
            let w = params.as_matrix(task.dim, rank);
            let code = x.dot(&w);
            let err = x - &code.dot(&w.t());
            // d/dW mean ||x - W W^T x||^2 = -(2/n) (E^T X + X^T E) W
            let g = err.t().dot(&code) + x.t().dot(&err.dot(&w));
            flatten(g * (-T::lit(2.0) / n))
        }
    };
    Ok(grad)
}

/// Top-1 accuracy of a softmax model; `None` for tasks without classes.
pub fn accuracy<T: Scalar>(task: &TaskSpec, params: &ModelParams<T>, data: &ClientDataset<T>) -> Result<Option<T>> {
    let TaskKind::SoftmaxRegression { classes } = task.kind else {
        return Ok(None);
    };
    task.check(params, data)?;
    let logits = data.features.dot(&params.as_matrix(task.dim, classes));
    let targets = data.targets.as_ref().expect("supervised");
    let mut hits = 0usize;
    for (row, &y) in logits.rows().into_iter().zip(targets.iter()) {
        let predicted =
            row.iter().enumerate().fold((0, T::neg_infinity()), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc }).0;
        hits += usize::from(predicted == class_index(y, classes)?);
    }
    Ok(Some(T::from_count(hits) / T::from_count(data.len())))
}

fn flatten<T: Scalar>(m: Array2<T>) -> Array1<T> {
    let len = m.len();
    m.as_standard_layout().into_owned().into_shape_with_order(len).expect("standard layout")
}

/// Parameter update rule driven by gradients.
pub trait Optimizer<T: Scalar> {
    fn step(&mut self, params: &mut Array1<T>, grad: &Array1<T>);
}

/// Plain gradient descent: `params <- params - lr * grad`.
#[derive(Clone, Copy, Debug)]
pub struct Sgd<T> {
    pub lr: T,
}

impl<T: Scalar> Optimizer<T> for Sgd<T> {
    fn step(&mut self, params: &mut Array1<T>, grad: &Array1<T>) {
        let lr = self.lr;
        Zip::from(params).and(grad).for_each(|p, &g| *p -= lr * g);
    }
}

/// Schedule of a client's local training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTraining<T> {
    pub lr: T,
    pub epochs: usize,
    /// Mini-batch size; values `>= n` mean full-batch descent.
    pub batch_size: usize,
}

/// Runs `epochs` passes of mini-batch gradient descent from `params`.
///
/// Rows are reshuffled once per epoch from `rng`. A full batch is used in
/// natural row order, so one full-batch epoch is exactly
/// `params - lr * gradient(params)`.
pub fn local_update<T: Scalar, R: Rng + ?Sized>(
    task: &TaskSpec,
    params: &ModelParams<T>,
    data: &ClientDataset<T>,
    schedule: &LocalTraining<T>,
    rng: &mut R,
) -> Result<ModelParams<T>> {
    if !(schedule.lr > T::zero()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    local_update_with(task, params, data, schedule, &mut Sgd { lr: schedule.lr }, rng)
}

pub fn local_update_with<T: Scalar, R: Rng + ?Sized>(
    task: &TaskSpec,
    params: &ModelParams<T>,
    data: &ClientDataset<T>,
    schedule: &LocalTraining<T>,
    optimizer: &mut impl Optimizer<T>,
    rng: &mut R,
) -> Result<ModelParams<T>> {
    if schedule.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    if schedule.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    task.check(params, data)?;
    let n = data.len();
    let mut current = params.clone();
    if schedule.batch_size >= n {
        for _ in 0..schedule.epochs {
            let g = gradient(task, &current, data)?;
            optimizer.step(&mut current.0, &g);
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..schedule.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(schedule.batch_size) {
                let batch = data.select(chunk);
                let g = gradient(task, &current, &batch)?;
                optimizer.step(&mut current.0, &g);
            }
        }
    }
    if current.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("local update diverged"));
    }
    Ok(current)
}

/// Element-wise square root of a loss vector.
pub fn sqrt_transform<T: Scalar>(losses: &[T]) -> Result<Vec<T>> {
    losses
        .iter()
        .map(
            |&l| {
                if l < T::zero() || l.is_nan() {
                    Err(Error::invalid(format!("negative loss {l}")))
                } else {
                    Ok(l.sqrt())
                }
            },
        )
        .collect()
}
