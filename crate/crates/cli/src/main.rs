use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clove_cli::config::{ExperimentConfig, PRESETS};
use clove_cli::{cmd_ablate, cmd_run, cmd_sweep, CliError};

/// Clustered federated learning experiments.
#[derive(Parser)]
#[command(name = "clove", version)]
struct Cli {
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config (a TOML file or a preset name).
    Run { config: String },
    /// Repeat a config for several values of one parameter.
    Sweep {
        config: String,
        /// delta, sigma, clients_per_cluster, samples_per_client or
        /// participation_fraction; defaults to the config's [sweep].
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Compare default CLoVE with its matching, clusterer and embedding
    /// ablations.
    Ablate { config: String },
    /// List the built-in presets.
    Presets,
    /// Print a preset's TOML.
    Dump { preset: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let out = |cfg: &ExperimentConfig| cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    match &cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(config)?;
            pool.install(|| cmd_run(&cfg, &out(&cfg)))?;
        }
        Command::Sweep { config, param, values } => {
            let cfg = ExperimentConfig::load(config)?;
            let spec = cfg.sweep.clone();
            let param = param.clone().or_else(|| spec.as_ref().map(|s| s.param.clone()));
            let values = values.clone().or_else(|| spec.as_ref().map(|s| s.values.clone()));
            let (Some(param), Some(values)) = (param, values) else {
                return Err(CliError::Config("sweep needs --param and --values or a [sweep] section".into()));
            };
            let ratio = spec.filter(|s| s.param == param).and_then(|s| s.sigma_per_delta);
            pool.install(|| cmd_sweep(&cfg, &param, &values, ratio, &out(&cfg)))?;
        }
        Command::Ablate { config } => {
            let cfg = ExperimentConfig::load(config)?;
            pool.install(|| cmd_ablate(&cfg, &out(&cfg)))?;
        }
        Command::Presets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
        }
        Command::Dump { preset } => {
            let (_, text) = PRESETS
                .iter()
                .find(|(n, _)| n == preset)
                .ok_or_else(|| CliError::Config(format!("unknown preset {preset:?}")))?;
            print!("{text}");
        }
    }
    Ok(())
}
