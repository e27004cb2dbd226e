use std::path::Path;

use crate::config::ExperimentConfig;
use crate::output::{ablation_csv, rounds_csv, summary_csv, sweep_csv, write_atomic};
use crate::runner::{ablation_plan, execute, plan, RunResult, RunSpec};
use crate::{CliError, Result};

/// Runs every seed, algorithm and variant; writes `rounds.csv` and
/// `summary.csv` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunResult>> {
    let results = execute(&plan(cfg)?, cfg.record_timing)?;
    write_run(&results, out)?;
    Ok(results)
}

fn write_run(results: &[RunResult], out: &Path) -> Result<()> {
    write_atomic(&out.join("rounds.csv"), &rounds_csv(results)?)?;
    write_atomic(&out.join("summary.csv"), &summary_csv(results)?)
}

/// One sub-run per value in `out/<param>=<value>/` plus `out/sweep.csv`.
/// All sub-runs share one parallel pass; reports are written afterwards.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[f64],
    sigma_per_delta: Option<f64>,
    out: &Path,
) -> Result<Vec<(f64, Vec<RunResult>)>> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let mut specs: Vec<RunSpec> = Vec::new();
    let mut spans = Vec::new();
    for &v in values {
        let point = cfg.with_param(param, v, sigma_per_delta)?;
        let p = plan(&point)?;
        spans.push((v, specs.len(), p.len()));
        specs.extend(p);
    }
    let results = execute(&specs, cfg.record_timing)?;
    let mut points = Vec::new();
    for (v, start, len) in spans {
        let slice = results[start..start + len].to_vec();
        write_run(&slice, &out.join(format!("{param}={v}")))?;
        points.push((v, slice));
    }
    write_atomic(&out.join("sweep.csv"), &sweep_csv(param, &points)?)?;
    Ok(points)
}

/// Default CLoVE against its three ablations; writes `ablation.csv` and
/// the per-round log of every arm.
pub fn cmd_ablate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunResult>> {
    let results = execute(&ablation_plan(cfg), cfg.record_timing)?;
    write_atomic(&out.join("rounds.csv"), &rounds_csv(&results)?)?;
    write_atomic(&out.join("ablation.csv"), &ablation_csv(&results)?)?;
    Ok(results)
}
