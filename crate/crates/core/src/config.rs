//! Declarative TOML configuration with `KEY=VALUE` overrides on dotted
//! paths.
//!
//! Top-level keys are the [`TrainConfig`] fields (so `reset.kind` or
//! `optimizer.alpha` address the training run directly) plus
//! `results_dir`, `checkpoint_dir`, `verbosity`, an `[env]` table and an
//! optional `[sweep]` table.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{CellKey, EnvConfig, SweepConfig};
use crate::optim::OptimHyper;
use crate::train::{fingerprint, ResetKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Verbosity {
    Quiet,
    #[default]
    Info,
    Debug,
}

fn default_results_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k_values: Vec<usize>,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub policies: Vec<ResetKind>,
    /// Defaults to the top-level `optimizer`.
    #[serde(default)]
    pub optimizers: Option<Vec<OptimHyper>>,
    /// Defaults to the single top-level `env`.
    #[serde(default)]
    pub envs: Option<Vec<EnvConfig>>,
    #[serde(default)]
    pub anchor_episodes: Option<usize>,
    #[serde(default)]
    pub anchor_seed: Option<u64>,
    #[serde(default)]
    pub oracle_tol: Option<f64>,
    #[serde(default)]
    pub auc_normalized: Option<bool>,
    #[serde(default)]
    pub fault_injection: Option<CellKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliConfig {
    #[serde(default = "default_results_dir")]
    pub results_dir: PathBuf,
    /// Defaults to `<results_dir>/checkpoints`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default)]
    pub verbosity: Verbosity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

const OWN_KEYS: [&str; 5] = ["results_dir", "checkpoint_dir", "verbosity", "env", "sweep"];

fn allowed_keys() -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = OWN_KEYS.iter().map(|k| k.to_string()).collect();
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(TrainConfig::default()) {
        keys.extend(map.keys().cloned());
    }
    keys.insert("nan_grad_at_step".into());
    keys
}

/// Parses `raw` as a TOML value; bare words fall back to strings.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `a.b.c=value` override, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not KEY=VALUE")))?;
    let parts: Vec<&str> = path.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{path}'")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path '{path}' crosses a non-table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl CliConfig {
    /// Parses TOML text, applies overrides in order and validates keys.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let allowed = allowed_keys();
        if let Some(bad) = table.keys().find(|k| !allowed.contains(*k)) {
            return Err(Error::Config(format!("unknown key '{bad}'")));
        }
        let cfg: CliConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("{e}")))?;
        cfg.train
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint_dir
            .clone()
            .unwrap_or_else(|| self.results_dir.join("checkpoints"))
    }

    pub fn env(&self) -> Result<&EnvConfig> {
        self.env
            .as_ref()
            .ok_or_else(|| Error::Config("missing [env] table".into()))
    }

    /// Expands the `[sweep]` table against the top-level defaults.
    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("missing [sweep] table".into()))?;
        let envs = match &s.envs {
            Some(envs) => envs.clone(),
            None => vec![self.env()?.clone()],
        };
        let sweep = SweepConfig {
            envs,
            optimizers: s
                .optimizers
                .clone()
                .unwrap_or_else(|| vec![self.train.optimizer.clone()]),
            policies: s.policies.clone(),
            k_values: s.k_values.clone(),
            budget: s.budget,
            seeds: s.seeds.clone(),
            base: self.train.clone(),
            anchor_episodes: s.anchor_episodes.unwrap_or(100),
            anchor_seed: s.anchor_seed.unwrap_or(0),
            oracle_tol: s.oracle_tol.unwrap_or(1e-10),
            auc_normalized: s.auc_normalized.unwrap_or(true),
            fault_injection: s.fault_injection.clone(),
        };
        sweep.validate()?;
        Ok(sweep)
    }
}
