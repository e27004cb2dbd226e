use std::fs;
use std::path::{Path, PathBuf};

use clove::{Algorithm, FederationConfig, WorldConfig};
use serde::Deserialize;
use toml::{Table, Value};

use crate::{CliError, Result};

/// Built-in presets as `(name, TOML source)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1-toy", include_str!("../presets/fig1-toy.toml")),
    ("lr-theory", include_str!("../presets/lr-theory.toml")),
    ("lr-sweep-delta", include_str!("../presets/lr-sweep-delta.toml")),
    ("init-robustness", include_str!("../presets/init-robustness.toml")),
    ("ablations", include_str!("../presets/ablations.toml")),
    ("kfed-compare", include_str!("../presets/kfed-compare.toml")),
];

/// Parameters a sweep may vary.
pub const SWEEP_PARAMS: &[&str] =
    &["delta", "sigma", "clients_per_cluster", "samples_per_client", "participation_fraction"];

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub preset: Option<String>,
    pub world: WorldConfig,
    #[serde(default)]
    pub federation: FederationConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Algorithms to run; defaults to `federation.algorithm`.
    #[serde(default)]
    pub algorithms: Option<Vec<Algorithm>>,
    /// Named federation overrides run side by side.
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Write measured wall-clock times; off keeps reports byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    /// Keys of `FederationConfig` to replace.
    #[serde(default)]
    pub federation: Table,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
    /// When sweeping `delta`, also set `sigma = sigma_per_delta * delta`.
    #[serde(default)]
    pub sigma_per_delta: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Parses a config, layering it over its `preset` when one is named.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let merged = match user.get("preset") {
            None => user,
            Some(Value::String(name)) => {
                let mut base = preset_table(name)?;
                merge(&mut base, user);
                base
            }
            Some(other) => return Err(CliError::Config(format!("preset must be a string, got {other}"))),
        };
        let cfg: ExperimentConfig =
            Value::Table(merged).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `arg` as a file, or as a built-in preset when no such file
    /// exists.
    pub fn load(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if !path.exists() && PRESETS.iter().any(|(n, _)| *n == arg) {
            return Self::preset(arg);
        }
        Self::from_path(path)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml(&format!("preset = {}", Value::String(name.into())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.algorithms.as_ref().is_some_and(Vec::is_empty) {
            return Err(CliError::Config("algorithms must not be empty".into()));
        }
        self.world.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.federation.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for v in &self.variants {
            self.federation_for(v).map_err(|e| CliError::Config(format!("variant {:?}: {e}", v.name)))?;
        }
        if let Some(s) = &self.sweep {
            self.with_param(&s.param, s.values.first().copied().unwrap_or(1.0), s.sigma_per_delta)?;
        }
        Ok(())
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        self.algorithms.clone().unwrap_or_else(|| vec![self.federation.algorithm])
    }

    /// Federation config with a variant's overrides applied.
    pub fn federation_for(&self, variant: &Variant) -> Result<FederationConfig> {
        let mut base = Value::try_from(&self.federation).map_err(|e| CliError::Config(e.to_string()))?;
        if let Value::Table(t) = &mut base {
            merge(t, variant.federation.clone());
        }
        let cfg: FederationConfig = base.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Copy with one sweep parameter set to `value`.
    pub fn with_param(&self, param: &str, value: f64, sigma_per_delta: Option<f64>) -> Result<Self> {
        let mut cfg = self.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(CliError::Config(format!("{param} needs a positive integer, got {value}")))
            }
        };
        match param {
            "delta" => {
                cfg.world.delta = value;
                if let Some(r) = sigma_per_delta {
                    cfg.world.sigma = r * value;
                }
            }
            "sigma" => cfg.world.sigma = value,
            "clients_per_cluster" => cfg.world.clients_per_cluster = count()?,
            "samples_per_client" => cfg.world.samples_per_client = count()?,
            "participation_fraction" => cfg.federation.participation_fraction = value,
            other => {
                return Err(CliError::Config(format!(
                    "unknown sweep parameter {other:?}; expected one of {SWEEP_PARAMS:?}"
                )))
            }
        }
        cfg.world.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.federation.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn preset_table(name: &str) -> Result<Table> {
    let (_, text) =
        PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?;
    Ok(text.parse().expect("built-in presets parse"))
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
