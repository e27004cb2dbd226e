//! CSV reports. Every writer produces bytes that are a pure function of
//! its input; files are replaced atomically.

use std::fs;
use std::path::Path;

use crate::runner::{run_metrics, summarize_runs, RunResult, METRICS};
use crate::stats::{summarize, Summary};
use crate::{CliError, Result};

pub const ROUNDS_HEADER: &[&str] = &[
    "seed",
    "round",
    "algorithm",
    "ari",
    "mean_test_loss",
    "test_accuracy",
    "max_model_distance",
    "group_sizes",
    "wall_ms",
];
pub const SUMMARY_HEADER: &[&str] = &["algorithm", "metric", "mean", "std", "median", "count"];
pub const ABLATION_HEADER: &[&str] = &[
    "variant",
    "final_ari",
    "final_ari_std",
    "mean_test_loss",
    "mean_test_loss_std",
    "test_accuracy",
    "test_accuracy_std",
    "seeds",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_cells(s: Option<Summary>) -> [String; 4] {
    match s {
        Some(s) => [s.mean.to_string(), s.std.to_string(), s.median.to_string(), s.count.to_string()],
        None => [String::new(), String::new(), String::new(), "0".into()],
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

/// Long format: one row per seed, algorithm and round.
pub fn rounds_csv(results: &[RunResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROUNDS_HEADER)?;
    for run in results {
        for r in &run.records {
            let sizes: Vec<String> = r.group_sizes.iter().map(usize::to_string).collect();
            w.write_record([
                run.seed.to_string(),
                r.round.to_string(),
                run.label.clone(),
                cell(r.ari),
                r.mean_test_loss.to_string(),
                cell(r.test_accuracy),
                cell(r.max_model_distance()),
                sizes.join(";"),
                r.wall_ms.to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn summary_csv(results: &[RunResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for (label, metric, s) in summarize_runs(results) {
        let [mean, std, median, count] = summary_cells(s);
        w.write_record([label, metric.to_string(), mean, std, median, count])?;
    }
    finish(w)
}

/// Summary rows of every sweep point, keyed by the swept value.
pub fn sweep_csv(param: &str, points: &[(f64, Vec<RunResult>)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = [param].into_iter().chain(SUMMARY_HEADER.iter().copied()).collect();
    w.write_record(&header)?;
    for (value, results) in points {
        for (label, metric, s) in summarize_runs(results) {
            let [mean, std, median, count] = summary_cells(s);
            w.write_record([value.to_string(), label, metric.to_string(), mean, std, median, count])?;
        }
    }
    finish(w)
}

/// One row per ablation arm with final metrics over seeds. Arms are the
/// labels of `results` with the algorithm prefix removed.
pub fn ablation_csv(results: &[RunResult]) -> Result<Vec<u8>> {
    let idx = |name: &str| METRICS.iter().position(|m| *m == name).expect("known metric");
    let (ari, loss, acc) = (idx("final_ari"), idx("final_mean_test_loss"), idx("final_test_accuracy"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ABLATION_HEADER)?;
    let mut labels: Vec<&str> = Vec::new();
    for r in results {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    for label in labels {
        let runs: Vec<Vec<Option<f64>>> =
            results.iter().filter(|r| r.label == label).map(|r| run_metrics(&r.records)).collect();
        let stat = |m: usize| summarize(&runs.iter().filter_map(|v| v[m]).collect::<Vec<_>>());
        let pair = |s: Option<Summary>| (cell(s.map(|s| s.mean)), cell(s.map(|s| s.std)));
        let (a, a_sd) = pair(stat(ari));
        let (l, l_sd) = pair(stat(loss));
        let (c, c_sd) = pair(stat(acc));
        let arm = label.split_once(':').map_or(label, |(_, arm)| arm);
        w.write_record([arm.to_string(), a, a_sd, l, l_sd, c, c_sd, runs.len().to_string()])?;
    }
    finish(w)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CliError::Io { path: path.to_owned(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}
