use std::collections::BTreeMap;

use clove::datagen::{gen_autoencoder_world, gen_softmax_world, SyntheticWorld};
use clove::engine::{aggregate, clove_assign, collect_loss_matrix, run_kfed_lite, run_local_only};
use clove::metrics::ari;
use clove::rng::{stream, Purpose};
use clove::task::{loss, ClientDataset, ModelParams, TaskKind};
use clove::{
    Algorithm, Averaging, Embedding, Federation, FederationConfig, InitPolicy, LossMatrix, SkewSpec, WorldConfig,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn small_linear(seed: u64) -> WorldConfig {
    let mut w = WorldConfig::linear(10, 3, 4, 200, 1.0, 0.05);
    w.seed = seed;
    w
}

fn clove_cfg(models: usize, rounds: usize, seed: u64) -> FederationConfig {
    FederationConfig { models, rounds, local_epochs: 3, batch_size: 50, lr: 0.05, seed, ..FederationConfig::default() }
}

fn run(world: &WorldConfig, cfg: FederationConfig) -> Federation {
    let mut f = Federation::from_world(cfg, SyntheticWorld::build(world).unwrap()).unwrap();
    f.run().unwrap();
    f
}

#[test]
fn records_do_not_depend_on_thread_count() {
    let go = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run(&small_linear(5), clove_cfg(3, 6, 5)))
    };
    let (one, four) = (go(1), go(4));
    assert_eq!(one.models(), four.models());
    for (a, b) in one.records().iter().zip(four.records()) {
        assert!(a.same_outcome(b));
    }
}

#[test]
fn replay_is_identical() {
    let a = run(&small_linear(8), clove_cfg(3, 4, 8));
    let b = run(&small_linear(8), clove_cfg(3, 4, 8));
    assert!(a.records().iter().zip(b.records()).all(|(x, y)| x.same_outcome(y)));
}

#[test]
fn single_model_clove_is_fedavg() {
    let world = small_linear(2);
    let make = |algorithm| {
        let cfg = FederationConfig { algorithm, models: 1, ..clove_cfg(1, 20, 2) };
        Federation::from_world(cfg, SyntheticWorld::build(&world).unwrap()).unwrap()
    };
    let (mut clove, mut fedavg) = (make(Algorithm::Clove), make(Algorithm::FedAvg));
    for _ in 0..20 {
        clove.run_round().unwrap();
        fedavg.run_round().unwrap();
        assert_eq!(clove.models()[0].as_slice(), fedavg.models()[0].as_slice());
    }
}

#[test]
fn fedavg_ignores_requested_model_count() {
    let cfg = FederationConfig { algorithm: Algorithm::FedAvg, ..clove_cfg(4, 2, 0) };
    let f = run(&small_linear(0), cfg);
    assert_eq!(f.models().len(), 1);
    assert_eq!(f.records()[0].group_sizes, vec![12]);
}

#[test]
fn local_only_federation_equals_standalone_training() {
    let mut world = small_linear(3);
    world.fresh_data_per_round = false;
    let cfg = FederationConfig { algorithm: Algorithm::LocalOnly, ..clove_cfg(1, 4, 3) };
    let fed = run(&world, cfg.clone());
    let data = SyntheticWorld::<f64>::build(&world).unwrap().train_data(0).unwrap();
    let alone = run_local_only(&data, &fed.task().clone(), &cfg).unwrap();
    assert_eq!(fed.models(), alone.as_slice());
}

#[test]
fn partial_participation_samples_ceiling_of_fraction() {
    let cfg = FederationConfig { participation_fraction: 0.4, ..clove_cfg(3, 5, 1) };
    let f = run(&small_linear(1), cfg);
    for r in f.records() {
        let active = r.assignment.iter().filter(|a| a.is_some()).count();
        assert_eq!(active, 5);
        assert_eq!(r.group_sizes.iter().sum::<usize>(), 5);
        assert!((-1.0..=1.0).contains(&r.ari.unwrap()));
    }
    let sets: Vec<Vec<bool>> = f.records().iter().map(|r| r.assignment.iter().map(Option::is_some).collect()).collect();
    assert!(sets.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn too_few_participants_for_clove_is_an_error() {
    let cfg = FederationConfig { participation_fraction: 0.1, ..clove_cfg(3, 1, 1) };
    let mut f = Federation::from_world(cfg, SyntheticWorld::build(&small_linear(1)).unwrap()).unwrap();
    assert!(f.run_round().is_err());
}

#[test]
fn identical_models_split_by_cluster_where_ifca_collapses() {
    let mut world = WorldConfig::linear(10, 2, 5, 1000, 1.0, 0.05);
    world.seed = 1;
    let cfg = |algorithm| FederationConfig { algorithm, init: InitPolicy::SameRandom, ..clove_cfg(2, 1, 1) };
    let clove = run(&world, cfg(Algorithm::Clove));
    let ifca = run(&world, cfg(Algorithm::Ifca));
    assert_eq!(clove.records()[0].ari, Some(1.0));
    assert!(ifca.records()[0].assignment.iter().all(|a| *a == Some(0)));
}

#[test]
fn loss_matrix_is_per_client_losses() {
    let world = SyntheticWorld::<f64>::build(&small_linear(4)).unwrap();
    let data = world.train_data(0).unwrap();
    let models = clove::engine::init_models(InitPolicy::IndependentRandom, 3, &world.task(), 4).unwrap();
    let refs: Vec<&ClientDataset<f64>> = data.iter().collect();
    let lm = collect_loss_matrix(&models, &refs, &world.task(), Embedding::SqrtLoss).unwrap();
    for (i, c) in data.iter().enumerate() {
        for (j, m) in models.iter().enumerate() {
            let l = loss(&world.task(), m, c).unwrap();
            assert_eq!(lm.losses[[i, j]], l);
            assert_eq!(lm.embedded[[i, j]], l.sqrt());
        }
    }
}

#[test]
fn planted_loss_matrix_is_recovered() {
    let planted: Vec<usize> = (0..12).map(|i| i % 4).collect();
    let losses = Array2::from_shape_fn((12, 4), |(i, j)| if planted[i] == j { 0.1 } else { 2.0 + 0.01 * i as f64 });
    let lm = LossMatrix::from_losses((0..12).collect(), losses, Embedding::Loss).unwrap();
    let got = clove_assign(&lm, &clove_cfg(4, 1, 0), &[None; 12], &mut stream(0, Purpose::Clustering, 0, 0)).unwrap();
    assert_eq!(got, planted);
}

#[test]
fn softmax_world_trains_and_clusters() {
    let world = WorldConfig {
        task: TaskKind::SoftmaxRegression { classes: 6 },
        dim: 8,
        clusters: 3,
        clients_per_cluster: 3,
        samples_per_client: 120,
        test_samples_per_client: Some(60),
        delta: 1.0,
        sigma: 0.0,
        fresh_data_per_round: false,
        skew: Some(SkewSpec::DisjointLabels { classes_per_cluster: 2 }),
        prototype_scale: 3.0,
        seed: 6,
    };
    let (sw, data) = gen_softmax_world::<f64>(&world, SkewSpec::DisjointLabels { classes_per_cluster: 2 }).unwrap();
    assert_eq!(data.len(), 9);
    let f = run(&world, FederationConfig { lr: 0.1, ..clove_cfg(3, 15, 6) });
    let last = f.records().last().unwrap();
    assert_eq!(last.ari, Some(1.0));
    assert!(last.test_accuracy.unwrap() > 0.9);
    assert!(last.model_distances.is_none());
    assert!(!sw.is_degenerate());
}

#[test]
fn autoencoder_world_clusters_by_subspace() {
    let world = WorldConfig {
        task: TaskKind::LinearAutoencoder { rank: 2 },
        dim: 10,
        clusters: 3,
        clients_per_cluster: 3,
        samples_per_client: 200,
        test_samples_per_client: None,
        delta: 1.0,
        sigma: 0.05,
        fresh_data_per_round: false,
        skew: None,
        prototype_scale: 3.0,
        seed: 2,
    };
    let (_, data) = gen_autoencoder_world::<f64>(&world).unwrap();
    assert!(data.iter().all(|c| c.targets.is_none()));
    let f = run(&world, FederationConfig { lr: 0.02, ..clove_cfg(3, 25, 2) });
    assert_eq!(f.records().last().unwrap().ari, Some(1.0));
}

#[test]
fn kfed_finds_feature_clusters_but_not_regression_clusters() {
    let mut blobs = Vec::new();
    for id in 0..9 {
        let centre = (id / 3) as f64 * 20.0;
        let mut rng = stream(id as u64, Purpose::TrainData, 0, 0);
        let x = Array2::from_shape_fn((30, 3), |_| centre + rand::Rng::random_range(&mut rng, -1.0..1.0));
        blobs.push(ClientDataset::new(id, x, None).unwrap());
    }
    let planted: Vec<usize> = (0..9).map(|i| i / 3).collect();
    let labels = run_kfed_lite(&blobs, 3, 3, &Default::default(), 0).unwrap();
    assert_eq!(ari(&planted, &labels).unwrap(), 1.0);

    let world = SyntheticWorld::<f64>::build(&small_linear(9)).unwrap();
    let labels = run_kfed_lite(&world.train_data(0).unwrap(), 3, 3, &Default::default(), 9).unwrap();
    assert!(ari(&world.truth().assignment, &labels).unwrap() < 0.5);
}

#[test]
fn gradient_averaging_steps_each_model_once() {
    let cfg = FederationConfig {
        averaging: Averaging::Gradient,
        lr: clove::engine::proximal_step_size(1.0),
        ..clove_cfg(3, 3, 7)
    };
    let f = run(&small_linear(7), cfg);
    let d: Vec<f64> = f.records().iter().map(|r| r.max_model_distance().unwrap()).collect();
    assert!(d[2] < d[0]);
}

proptest! {
    #[test]
    fn aggregate_is_convex_combination(
        payloads in prop::collection::vec((prop::collection::vec(-10.0..10.0f64, 3), 1usize..500, 0usize..3), 1..10)
    ) {
        let models = vec![ModelParams::from_vec(vec![100.0; 3]).unwrap(); 3];
        let mut p = BTreeMap::new();
        let mut a = BTreeMap::new();
        let mut n = BTreeMap::new();
        for (id, (v, count, m)) in payloads.iter().enumerate() {
            p.insert(id, Array1::from(v.clone()));
            a.insert(id, *m);
            n.insert(id, *count);
        }
        let out = aggregate(Averaging::Model, &models, &p, &a, &n, 1.0).unwrap();
        for (m, model) in out.iter().enumerate() {
            let members: Vec<&Vec<f64>> = payloads.iter().filter(|x| x.2 == m).map(|x| &x.0).collect();
            for c in 0..3 {
                if members.is_empty() {
                    prop_assert_eq!(model.as_slice()[c], 100.0);
                } else {
                    let lo = members.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
                    let hi = members.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(model.as_slice()[c] >= lo - 1e-9 && model.as_slice()[c] <= hi + 1e-9);
                }
            }
        }
    }
}
