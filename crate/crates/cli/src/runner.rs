use clove::engine::Federation;
use clove::metrics::convergence_stats;
use clove::{
    Algorithm, Clusterer, Embedding, FederationConfig, MatchingMode, RoundRecord, SyntheticWorld, WorldConfig,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Variant};
use crate::stats::{summarize, Summary};
use crate::Result;

/// One federation to simulate.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    /// Algorithm name, suffixed with `:variant` when the experiment has
    /// variants.
    pub label: String,
    pub seed: u64,
    pub world: WorldConfig,
    pub federation: FederationConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub label: String,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
}

/// Runs in output order: variant, then algorithm, then seed.
pub fn plan(cfg: &ExperimentConfig) -> Result<Vec<RunSpec>> {
    let variants: Vec<Option<&Variant>> =
        if cfg.variants.is_empty() { vec![None] } else { cfg.variants.iter().map(Some).collect() };
    let mut specs = Vec::new();
    for variant in variants {
        let base = match variant {
            Some(v) => cfg.federation_for(v)?,
            None => cfg.federation.clone(),
        };
        for algorithm in cfg.algorithms() {
            let label = match variant {
                Some(v) => format!("{}:{}", algorithm.name(), v.name),
                None => algorithm.name().to_string(),
            };
            for &seed in &cfg.seeds {
                let world = WorldConfig { seed, ..cfg.world.clone() };
                let federation = FederationConfig { algorithm, seed, ..base.clone() };
                specs.push(RunSpec { label: label.clone(), seed, world, federation });
            }
        }
    }
    Ok(specs)
}

/// Runs every spec in parallel and returns results in spec order.
pub fn execute(specs: &[RunSpec], record_timing: bool) -> Result<Vec<RunResult>> {
    specs
        .par_iter()
        .map(|spec| {
            let world = SyntheticWorld::<f64>::build(&spec.world)?;
            let mut fed = Federation::from_world(spec.federation.clone(), world)?;
            fed.run()?;
            let mut records = fed.into_records();
            if !record_timing {
                records.iter_mut().for_each(|r| r.wall_ms = 0);
            }
            log::info!("{} seed {} done", spec.label, spec.seed);
            Ok(RunResult { label: spec.label.clone(), seed: spec.seed, records })
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    execute(&plan(cfg)?, cfg.record_timing)
}

/// Metrics reported per run, in `summary.csv` order.
pub const METRICS: &[&str] = &[
    "final_ari",
    "first_round_ari",
    "rounds_to_recovery",
    "final_mean_test_loss",
    "final_test_accuracy",
    "final_max_model_distance",
];

/// Values of every metric for one run; absent ones are `None`.
pub fn run_metrics(records: &[RoundRecord]) -> Vec<Option<f64>> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return vec![None; METRICS.len()];
    };
    let aris: Option<Vec<f64>> = records.iter().map(|r| r.ari).collect();
    let recovery = aris
        .as_deref()
        .and_then(|a| convergence_stats(a).ok())
        .and_then(|s| s.rounds_to_full_recovery)
        .map(|r| r as f64);
    vec![last.ari, first.ari, recovery, Some(last.mean_test_loss), last.test_accuracy, last.max_model_distance()]
}

/// Per label (in first-seen order) and metric, statistics over seeds.
pub fn summarize_runs(results: &[RunResult]) -> Vec<(String, &'static str, Option<Summary>)> {
    let mut labels: Vec<&str> = Vec::new();
    for r in results {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let mut rows = Vec::new();
    for label in labels {
        let per_run: Vec<Vec<Option<f64>>> =
            results.iter().filter(|r| r.label == label).map(|r| run_metrics(&r.records)).collect();
        for (m, name) in METRICS.iter().enumerate() {
            let values: Vec<f64> = per_run.iter().filter_map(|v| v[m]).collect();
            rows.push((label.to_string(), *name, summarize(&values)));
        }
    }
    rows
}

/// The four ablation arms as `(name, federation)`, all running CLoVE.
/// The default arm uses min-cost matching, k-means and plain losses; every
/// other arm changes exactly one of those.
pub fn ablation_arms(base: &FederationConfig) -> [(&'static str, FederationConfig); 4] {
    let default = FederationConfig {
        algorithm: Algorithm::Clove,
        matching: MatchingMode::MinCost,
        clusterer: Clusterer::Kmeans,
        embedding: Embedding::Loss,
        ..base.clone()
    };
    [
        ("default", default.clone()),
        ("no-matching", FederationConfig { matching: MatchingMode::Ordered, ..default.clone() }),
        ("agglomerative", FederationConfig { clusterer: Clusterer::Agglomerative, ..default.clone() }),
        ("sqrt-loss", FederationConfig { embedding: Embedding::SqrtLoss, ..default }),
    ]
}

/// Ablation runs labelled `clove:<arm>`.
pub fn ablation_plan(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for (name, fed) in ablation_arms(&cfg.federation) {
        for &seed in &cfg.seeds {
            specs.push(RunSpec {
                label: format!("clove:{name}"),
                seed,
                world: WorldConfig { seed, ..cfg.world.clone() },
                federation: FederationConfig { seed, ..fed.clone() },
            });
        }
    }
    specs
}
