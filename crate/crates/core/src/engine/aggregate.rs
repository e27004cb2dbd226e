use std::collections::BTreeMap;

use ndarray::Array1;

use super::config::Averaging;
use crate::task::ModelParams;
use crate::{Error, Result, Scalar};

/// Sample-weighted per-model combination of client payloads.
///
/// Weights are `n_i / N_j` within each model's group, so a lone client's
/// payload is taken exactly.
/// `assignment` maps client id to model; `payloads` hold updated parameters
/// (model averaging) or gradients (gradient averaging). Sums run in
/// ascending client id. Models nobody was assigned to are returned
/// unchanged.
pub fn aggregate<T: Scalar>(
    averaging: Averaging,
    models: &[ModelParams<T>],
    payloads: &BTreeMap<usize, Array1<T>>,
    assignment: &BTreeMap<usize, usize>,
    sample_counts: &BTreeMap<usize, usize>,
    lr: T,
) -> Result<Vec<ModelParams<T>>> {
    let mut totals = vec![T::zero(); models.len()];
    for (&client, &model) in assignment {
        let payload = payloads.get(&client).ok_or(Error::MissingPayload(client))?;
        let n = sample_counts.get(&client).ok_or(Error::MissingPayload(client))?;
        if model >= models.len() {
            return Err(Error::invalid(format!("client {client} assigned to unknown model {model}")));
        }
        if payload.len() != models[model].len() {
            return Err(Error::DimensionMismatch {
                what: "payload",
                expected: models[model].len(),
                found: payload.len(),
            });
        }
        totals[model] += T::from_count(*n);
    }
    let mut means: Vec<Option<Array1<T>>> = vec![None; models.len()];
    for (&client, &model) in assignment {
        let w = T::from_count(sample_counts[&client]) / totals[model];
        let payload = &payloads[&client];
        match &mut means[model] {
            Some(acc) => acc.zip_mut_with(payload, |a, &p| *a += w * p),
            slot @ None => *slot = Some(payload.mapv(|p| w * p)),
        }
    }
    models
        .iter()
        .zip(means)
        .map(|(model, mean)| {
            let Some(mean) = mean else {
                return Ok(model.clone());
            };
            let next = match averaging {
                Averaging::Model => mean,
                Averaging::Gradient => {
                    let mut p = model.values().clone();
                    p.zip_mut_with(&mean, |x, &g| *x -= lr * g);
                    p
                }
            };
            ModelParams::new(next)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    type Maps = (BTreeMap<usize, Array1<f64>>, BTreeMap<usize, usize>, BTreeMap<usize, usize>);

    fn maps(entries: &[(usize, usize, usize, Array1<f64>)]) -> Maps {
        let mut p = BTreeMap::new();
        let mut a = BTreeMap::new();
        let mut n = BTreeMap::new();
        for (client, model, count, payload) in entries {
            p.insert(*client, payload.clone());
            a.insert(*client, *model);
            n.insert(*client, *count);
        }
        (p, a, n)
    }

    #[test]
    fn weighted_model_average() {
        let models = vec![ModelParams::zeros(3)];
        let (p, a, n) = maps(&[(0, 0, 100, array![0.0, 0.0, 0.0]), (1, 0, 300, array![4.0, 4.0, 4.0])]);
        let out = aggregate(Averaging::Model, &models, &p, &a, &n, 0.1).unwrap();
        assert_eq!(out[0].as_slice(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn single_client_model_is_copied_and_empty_group_kept() {
        let models =
            vec![ModelParams::from_vec(vec![1.0, 2.0]).unwrap(), ModelParams::from_vec(vec![-7.0, 0.5]).unwrap()];
        let (p, a, n) = maps(&[(4, 0, 10, array![0.25, -3.0])]);
        let out = aggregate(Averaging::Model, &models, &p, &a, &n, 1.0).unwrap();
        assert_eq!(out[0].as_slice(), &[0.25, -3.0]);
        assert_eq!(out[1], models[1]);
    }

    #[test]
    fn gradient_average_takes_one_step() {
        let models = vec![ModelParams::from_vec(vec![1.0]).unwrap()];
        let (p, a, n) = maps(&[(0, 0, 1, array![2.0]), (1, 0, 3, array![6.0])]);
        let out = aggregate(Averaging::Gradient, &models, &p, &a, &n, 0.5).unwrap();
        assert_eq!(out[0].as_slice(), &[1.0 - 0.5 * 5.0]);
    }

    #[test]
    fn missing_payload_is_an_error() {
        let models = vec![ModelParams::<f64>::zeros(1)];
        let (p, _, n) = maps(&[(0, 0, 1, array![2.0])]);
        let mut a = BTreeMap::new();
        a.insert(0, 0);
        a.insert(1, 0);
        assert!(matches!(aggregate(Averaging::Model, &models, &p, &a, &n, 1.0), Err(Error::MissingPayload(1))));
    }
}
