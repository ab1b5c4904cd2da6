//! Sweeps over environments, optimizers, reset policies, `K` values and
//! seeds at a fixed gradient budget, plus score normalization, aggregation
//! and area-under-curve summaries.
//!
//! Output files inside a results directory:
//!
//! * `runs.jsonl`: one [`RunLine`] per run, sorted by cell key.
//! * `anchors.json`: [`NormalizationAnchors`] per environment name.
//! * `curves.csv`: long format, columns `env, optimizer, policy, K, T, seed,
//!   iteration, raw, normalized, fingerprint`.
//! * `auc.csv`: columns `optimizer, policy, K, T, stat, auc, n_envs,
//!   n_runs, partial, seeds, fingerprint`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptimHyper;
use crate::rl::{self, FeatureMap, MdpSpec, QTable};
use crate::train::{self, fingerprint, ResetKind, ResetPolicy, RunRecord, TrainConfig};

pub const RUNS_FILE: &str = "runs.jsonl";
pub const ANCHORS_FILE: &str = "anchors.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const AUC_FILE: &str = "auc.csv";

/// Lower and upper reference scores of one environment. The upper anchor
/// is the greedy policy on the value-iteration `Q*`, standing in for a
/// human score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationAnchors {
    pub random_score: f64,
    pub reference_score: f64,
}

impl NormalizationAnchors {
    pub fn validate(&self) -> Result<()> {
        if !self.random_score.is_finite() || !self.reference_score.is_finite() {
            return Err(Error::Degenerate("non-finite anchor".into()));
        }
        if (self.reference_score - self.random_score).abs()
            <= 1e-12 * self.reference_score.abs().max(1.0)
        {
            return Err(Error::Degenerate(format!(
                "reference score {} equals random score {}",
                self.reference_score, self.random_score
            )));
        }
        Ok(())
    }
}

/// `(agent − random) / (reference − random)`.
pub fn normalize_score(agent: f64, anchors: &NormalizationAnchors) -> Result<f64> {
    anchors.validate()?;
    Ok((agent - anchors.random_score) / (anchors.reference_score - anchors.random_score))
}

fn rollout_mean<R: Rng>(
    spec: &MdpSpec,
    n_episodes: usize,
    episode_cap: usize,
    rng: &mut R,
    mut policy: impl FnMut(usize, &mut R) -> usize,
) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..n_episodes {
        let mut s = spec.sample_start(rng);
        for _ in 0..episode_cap {
            if spec.is_terminal(s) {
                break;
            }
            let a = policy(s, rng);
            let (next, r, terminal) = rl::env_step(spec, s, a, rng)?;
            total += r;
            s = next;
            if terminal {
                break;
            }
        }
    }
    Ok(total / n_episodes as f64)
}

/// Mean undiscounted return of the uniform-random policy and of the greedy
/// policy on `oracle_q`, over `n_episodes` capped episodes each.
pub fn compute_anchors<R: Rng>(
    env_spec: &MdpSpec,
    oracle_q: &QTable,
    n_episodes: usize,
    episode_cap: usize,
    rng: &mut R,
) -> Result<NormalizationAnchors> {
    if n_episodes == 0 || episode_cap == 0 {
        return Err(Error::invalid("anchor episodes and cap must be positive"));
    }
    let n_actions = env_spec.n_actions;
    let random_score = rollout_mean(env_spec, n_episodes, episode_cap, rng, |_, r| {
        r.gen_range(0..n_actions)
    })?;
    let reference_score = rollout_mean(env_spec, n_episodes, episode_cap, rng, |s, _| {
        oracle_q.greedy_action(s)
    })?;
    let anchors = NormalizationAnchors {
        random_score,
        reference_score,
    };
    anchors.validate()?;
    Ok(anchors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Median,
    Mean,
}

impl Stat {
    pub fn as_str(self) -> &'static str {
        match self {
            Stat::Median => "median",
            Stat::Mean => "mean",
        }
    }
}

/// Order-independent statistic of a set of values: they are sorted first,
/// so any permutation of the input gives a bit-identical result.
fn stat_of(values: &mut [f64], stat: Stat) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match stat {
        Stat::Mean => values.iter().sum::<f64>() / n as f64,
        Stat::Median => {
            if n % 2 == 1 {
                values[n / 2]
            } else {
                0.5 * (values[n / 2 - 1] + values[n / 2])
            }
        }
    }
}

/// Pointwise median or mean of equal-length curves.
pub fn aggregate(curves: &[Vec<f64>], stat: Stat) -> Result<Vec<f64>> {
    let first = curves
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty set of curves"))?;
    let len = first.len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("curves have ragged lengths"));
    }
    let mut column = vec![0.0; curves.len()];
    Ok((0..len)
        .map(|i| {
            for (slot, c) in column.iter_mut().zip(curves) {
                *slot = c[i];
            }
            stat_of(&mut column, stat)
        })
        .collect())
}

/// Trapezoidal integral over the iteration index. With `normalized` the
/// integral is divided by the index span, so a constant curve `c` scores
/// `c` regardless of its length. A single-point curve scores its value.
pub fn area_under_curve(curve: &[f64], normalized: bool) -> Result<f64> {
    match curve.len() {
        0 => Err(Error::invalid("area under an empty curve")),
        1 => Ok(curve[0]),
        n => {
            let area: f64 = curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
            Ok(if normalized {
                area / (n - 1) as f64
            } else {
                area
            })
        }
    }
}

fn default_branching() -> usize {
    3
}

/// Declarative environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Gridworld {
        #[serde(default)]
        name: Option<String>,
        width: usize,
        height: usize,
        goal: (usize, usize),
        #[serde(default)]
        step_penalty: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        features: Option<FeatureMap>,
    },
    Garnet {
        #[serde(default)]
        name: Option<String>,
        n_states: usize,
        n_actions: usize,
        #[serde(default = "default_branching")]
        branching: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        features: Option<FeatureMap>,
    },
}

impl EnvConfig {
    pub fn name(&self) -> String {
        match self {
            EnvConfig::Gridworld { name: Some(n), .. }
            | EnvConfig::Garnet { name: Some(n), .. } => n.clone(),
            EnvConfig::Gridworld {
                width,
                height,
                seed,
                ..
            } => format!("grid{width}x{height}-s{seed}"),
            EnvConfig::Garnet {
                n_states,
                n_actions,
                branching,
                seed,
                ..
            } => format!("garnet{n_states}x{n_actions}b{branching}-s{seed}"),
        }
    }

    pub fn build(&self, gamma: f64) -> Result<MdpSpec> {
        let (spec, features) = match self {
            EnvConfig::Gridworld {
                width,
                height,
                goal,
                step_penalty,
                seed,
                features,
                ..
            } => (
                rl::make_gridworld(*width, *height, *goal, *step_penalty, gamma, *seed)?,
                features,
            ),
            EnvConfig::Garnet {
                n_states,
                n_actions,
                branching,
                seed,
                features,
                ..
            } => (
                rl::make_garnet(*n_states, *n_actions, *branching, gamma, *seed)?,
                features,
            ),
        };
        let spec = match features {
            Some(f) => spec.with_feature_map(*f),
            None => spec,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Short optimizer name used in keys and tables; a `+prox` suffix marks a
/// nonzero proximal coefficient.
pub fn optimizer_label(h: &OptimHyper) -> String {
    if h.prox_coeff > 0.0 {
        format!("{}+prox", h.kind)
    } else {
        h.kind.to_string()
    }
}

/// Identity of one grid cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub env: String,
    pub optimizer: String,
    pub policy: ResetKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} {} K={} seed={}",
            self.env, self.optimizer, self.policy, self.k, self.seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One line of `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLine {
    #[serde(flatten)]
    pub key: CellKey,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub fingerprint: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<RunRecord>,
}

fn default_anchor_episodes() -> usize {
    100
}

fn default_oracle_tol() -> f64 {
    1e-10
}

fn default_true() -> bool {
    true
}

/// Grid definition. Every cell runs `base` with its own `K`, `T =
/// budget / K`, optimizer, reset policy and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub envs: Vec<EnvConfig>,
    pub optimizers: Vec<OptimHyper>,
    pub policies: Vec<ResetKind>,
    pub k_values: Vec<usize>,
    /// Total optimizer steps per run, `K·T`, shared by every cell.
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub base: TrainConfig,
    #[serde(default = "default_anchor_episodes")]
    pub anchor_episodes: usize,
    #[serde(default)]
    pub anchor_seed: u64,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    #[serde(default = "default_true")]
    pub auc_normalized: bool,
    /// Forces a non-finite gradient in the matching cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_injection: Option<CellKey>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.envs.is_empty()
            || self.optimizers.is_empty()
            || self.policies.is_empty()
            || self.k_values.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        for &k in &self.k_values {
            if k == 0 || self.budget == 0 || self.budget % k as u64 != 0 {
                return Err(Error::Config(format!(
                    "budget {} is not a positive multiple of K={k}",
                    self.budget
                )));
            }
        }
        let names: BTreeSet<String> = self.envs.iter().map(EnvConfig::name).collect();
        if names.len() != self.envs.len() {
            return Err(Error::Config("environment names must be unique".into()));
        }
        let labels: BTreeSet<String> = self.optimizers.iter().map(optimizer_label).collect();
        if labels.len() != self.optimizers.len() {
            return Err(Error::Config("optimizer labels must be unique".into()));
        }
        for h in &self.optimizers {
            h.validate()?;
        }
        Ok(())
    }

    pub fn anchor_params(&self) -> AnchorParams {
        AnchorParams {
            oracle_tol: self.oracle_tol,
            episodes: self.anchor_episodes,
            episode_cap: self.base.episode_cap,
            seed: self.anchor_seed,
        }
    }

    /// All cells in canonical order.
    pub fn cells(&self) -> Vec<(CellKey, TrainConfig, usize)> {
        let mut out = Vec::new();
        for (env_idx, env) in self.envs.iter().enumerate() {
            for h in &self.optimizers {
                for &policy in &self.policies {
                    for &k in &self.k_values {
                        for &seed in &self.seeds {
                            let key = CellKey {
                                env: env.name(),
                                optimizer: optimizer_label(h),
                                policy,
                                k,
                                seed,
                            };
                            let mut cfg = self.base.clone();
                            cfg.inner_steps = k;
                            cfg.iterations = (self.budget / k as u64) as usize;
                            cfg.seed = seed;
                            cfg.optimizer = h.clone();
                            cfg.reset = ResetPolicy {
                                kind: policy,
                                probability: None,
                            };
                            cfg.nan_grad_at_step = if self.fault_injection.as_ref() == Some(&key) {
                                Some(0)
                            } else {
                                None
                            };
                            out.push((key, cfg, env_idx));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEntry {
    pub env_fingerprint: String,
    #[serde(flatten)]
    pub anchors: NormalizationAnchors,
}

/// Value-iteration oracle plus anchors for one environment. Deterministic
/// in `anchor_seed`.
pub fn env_anchors(
    spec: &MdpSpec,
    oracle_tol: f64,
    n_episodes: usize,
    episode_cap: usize,
    anchor_seed: u64,
) -> Result<(QTable, NormalizationAnchors)> {
    let q = rl::value_iteration_oracle(spec, oracle_tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(anchor_seed);
    let anchors = compute_anchors(spec, &q, n_episodes, episode_cap, &mut rng)?;
    Ok((q, anchors))
}

pub fn read_anchors(dir: &Path) -> Result<BTreeMap<String, AnchorEntry>> {
    let path = dir.join(ANCHORS_FILE);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_anchors(dir: &Path, anchors: &BTreeMap<String, AnchorEntry>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(anchors)?;
    text.push('\n');
    write_atomic(&dir.join(ANCHORS_FILE), text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads `runs.jsonl`; for repeated keys the last line wins.
pub fn read_runs(dir: &Path) -> Result<Vec<RunLine>> {
    let path = dir.join(RUNS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut by_key = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let run: RunLine = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("{}:{}: {e}", path.display(), n + 1)))?;
        by_key.insert(run.key.clone(), run);
    }
    Ok(by_key.into_values().collect())
}

pub fn append_run(dir: &Path, run: &RunLine) -> Result<()> {
    let path = dir.join(RUNS_FILE);
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let mut line = serde_json::to_string(run)?;
    line.push('\n');
    file.write_all(line.as_bytes())
        .map_err(|e| Error::io(&path, e))
}

/// Rewrites `runs.jsonl` deduplicated and sorted by key.
pub fn canonicalize_runs(dir: &Path) -> Result<Vec<RunLine>> {
    let runs = read_runs(dir)?;
    let mut text = String::new();
    for run in &runs {
        text.push_str(&serde_json::to_string(run)?);
        text.push('\n');
    }
    write_atomic(&dir.join(RUNS_FILE), text.as_bytes())?;
    Ok(runs)
}

/// One row of the AUC table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub optimizer: String,
    pub policy: ResetKind,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub stat: Stat,
    pub auc: f64,
    pub n_envs: usize,
    pub n_runs: usize,
    /// Some runs of this configuration failed or lack anchors.
    pub partial: bool,
    pub seeds: String,
    pub fingerprint: String,
}

/// Aggregated view of a set of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Normalized curve per successful run, keyed like `runs`.
    pub normalized: BTreeMap<CellKey, Vec<f64>>,
    /// Aggregate curve per `(optimizer, policy, K, T, stat)`.
    pub curves: BTreeMap<(String, ResetKind, usize, usize, &'static str), Vec<f64>>,
    pub auc: Vec<AucRow>,
    pub warnings: Vec<String>,
}

/// Normalizes every successful run, averages seeds within each
/// environment, takes the median and mean across environments and
/// integrates each aggregate curve. Failed runs and runs without anchors are
/// excluded and flag their configuration as partial.
pub fn summarize(
    runs: &[RunLine],
    anchors: &BTreeMap<String, AnchorEntry>,
    auc_normalized: bool,
) -> Result<Summary> {
    type Group = (String, ResetKind, usize, usize);
    let mut normalized = BTreeMap::new();
    let mut warnings = Vec::new();
    // group -> env -> list of normalized seed curves
    let mut groups: BTreeMap<Group, BTreeMap<String, Vec<Vec<f64>>>> = BTreeMap::new();
    let mut partial: BTreeSet<Group> = BTreeSet::new();
    let mut seeds: BTreeMap<Group, BTreeSet<u64>> = BTreeMap::new();
    let mut prints: BTreeMap<Group, Vec<String>> = BTreeMap::new();
    for run in runs {
        let group = (
            run.key.optimizer.clone(),
            run.key.policy,
            run.key.k,
            run.iterations,
        );
        let record = match (&run.status, &run.record) {
            (RunStatus::Ok, Some(r)) => r,
            _ => {
                warnings.push(format!("excluding failed run {}", run.key));
                partial.insert(group);
                continue;
            }
        };
        let Some(entry) = anchors.get(&run.key.env) else {
            warnings.push(format!(
                "no anchors for env {}; excluding {}",
                run.key.env, run.key
            ));
            partial.insert(group);
            continue;
        };
        let curve = record
            .eval_returns
            .iter()
            .map(|&x| normalize_score(x, &entry.anchors))
            .collect::<Result<Vec<_>>>()?;
        normalized.insert(run.key.clone(), curve.clone());
        groups
            .entry(group.clone())
            .or_default()
            .entry(run.key.env.clone())
            .or_default()
            .push(curve);
        seeds.entry(group.clone()).or_default().insert(run.key.seed);
        prints
            .entry(group)
            .or_default()
            .push(run.fingerprint.clone());
    }
    let mut curves = BTreeMap::new();
    let mut auc = Vec::new();
    for (group, per_env) in &groups {
        let env_curves = per_env
            .values()
            .map(|seed_curves| aggregate(seed_curves, Stat::Mean))
            .collect::<Result<Vec<_>>>()?;
        let n_runs: usize = per_env.values().map(Vec::len).sum();
        let mut fps = prints[group].clone();
        fps.sort();
        for stat in [Stat::Median, Stat::Mean] {
            let curve = aggregate(&env_curves, stat)?;
            auc.push(AucRow {
                optimizer: group.0.clone(),
                policy: group.1,
                k: group.2,
                iterations: group.3,
                stat,
                auc: area_under_curve(&curve, auc_normalized)?,
                n_envs: env_curves.len(),
                n_runs,
                partial: partial.contains(group),
                seeds: seeds[group]
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(";"),
                fingerprint: fingerprint(&fps),
            });
            curves.insert(
                (group.0.clone(), group.1, group.2, group.3, stat.as_str()),
                curve,
            );
        }
    }
    Ok(Summary {
        normalized,
        curves,
        auc,
        warnings,
    })
}

/// Writes `curves.csv` and `auc.csv`.
pub fn write_report_csvs(dir: &Path, runs: &[RunLine], summary: &Summary) -> Result<()> {
    let mut curves = csv::Writer::from_writer(Vec::new());
    curves.write_record([
        "env",
        "optimizer",
        "policy",
        "K",
        "T",
        "seed",
        "iteration",
        "raw",
        "normalized",
        "fingerprint",
    ])?;
    for run in runs {
        let (Some(record), Some(norm)) = (&run.record, summary.normalized.get(&run.key)) else {
            continue;
        };
        for (i, (raw, n)) in record.eval_returns.iter().zip(norm).enumerate() {
            curves.write_record([
                run.key.env.clone(),
                run.key.optimizer.clone(),
                run.key.policy.to_string(),
                run.key.k.to_string(),
                run.iterations.to_string(),
                run.key.seed.to_string(),
                i.to_string(),
                raw.to_string(),
                n.to_string(),
                run.fingerprint.clone(),
            ])?;
        }
    }
    let bytes = curves
        .into_inner()
        .map_err(|e| Error::Malformed(e.to_string()))?;
    write_atomic(&dir.join(CURVES_FILE), &bytes)?;

    let mut table = csv::Writer::from_writer(Vec::new());
    table.write_record([
        "optimizer",
        "policy",
        "K",
        "T",
        "stat",
        "auc",
        "n_envs",
        "n_runs",
        "partial",
        "seeds",
        "fingerprint",
    ])?;
    for row in &summary.auc {
        table.write_record([
            row.optimizer.clone(),
            row.policy.to_string(),
            row.k.to_string(),
            row.iterations.to_string(),
            row.stat.as_str().to_string(),
            row.auc.to_string(),
            row.n_envs.to_string(),
            row.n_runs.to_string(),
            row.partial.to_string(),
            row.seeds.clone(),
            row.fingerprint.clone(),
        ])?;
    }
    let bytes = table
        .into_inner()
        .map_err(|e| Error::Malformed(e.to_string()))?;
    write_atomic(&dir.join(AUC_FILE), &bytes)
}

/// Reads `auc.csv` back.
pub fn read_auc_csv(dir: &Path) -> Result<Vec<AucRow>> {
    let path = dir.join(AUC_FILE);
    let mut reader = csv::Reader::from_path(&path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default().to_string();
        let parse_err = |what: &str| Error::Malformed(format!("{}: bad {what}", path.display()));
        rows.push(AucRow {
            optimizer: field(0),
            policy: serde_json::from_value(serde_json::Value::String(field(1)))
                .map_err(|_| parse_err("policy"))?,
            k: field(2).parse().map_err(|_| parse_err("K"))?,
            iterations: field(3).parse().map_err(|_| parse_err("T"))?,
            stat: serde_json::from_value(serde_json::Value::String(field(4)))
                .map_err(|_| parse_err("stat"))?,
            auc: field(5).parse().map_err(|_| parse_err("auc"))?,
            n_envs: field(6).parse().map_err(|_| parse_err("n_envs"))?,
            n_runs: field(7).parse().map_err(|_| parse_err("n_runs"))?,
            partial: field(8).parse().map_err(|_| parse_err("partial"))?,
            seeds: field(9),
            fingerprint: field(10),
        });
    }
    Ok(rows)
}

/// Text table of `stat` AUC: one block per optimizer, rows are reset
/// policies, columns are `K` (with `T` appended when one `K` appears with
/// several `T`).
pub fn format_table(rows: &[AucRow], stat: Stat) -> String {
    let mut out = String::new();
    let optimizers: BTreeSet<&str> = rows.iter().map(|r| r.optimizer.as_str()).collect();
    for opt in optimizers {
        let sel: Vec<&AucRow> = rows
            .iter()
            .filter(|r| r.optimizer == opt && r.stat == stat)
            .collect();
        let cols: BTreeSet<(usize, usize)> = sel.iter().map(|r| (r.k, r.iterations)).collect();
        let ks: Vec<usize> = cols.iter().map(|c| c.0).collect();
        let label = |c: &(usize, usize)| {
            if ks.iter().filter(|&&k| k == c.0).count() > 1 {
                format!("K={},T={}", c.0, c.1)
            } else {
                format!("K={}", c.0)
            }
        };
        let policies: BTreeSet<ResetKind> = sel.iter().map(|r| r.policy).collect();
        out.push_str(&format!("{} AUC ({opt})\n", stat.as_str()));
        out.push_str(&format!("{:<15}", "policy"));
        for c in &cols {
            out.push_str(&format!("{:>12}", label(c)));
        }
        out.push('\n');
        for p in policies {
            out.push_str(&format!("{:<15}", p.as_str()));
            for c in &cols {
                match sel
                    .iter()
                    .find(|r| r.policy == p && (r.k, r.iterations) == *c)
                {
                    Some(r) => {
                        let mark = if r.partial { "*" } else { "" };
                        out.push_str(&format!("{:>12}", format!("{:.4}{mark}", r.auc)));
                    }
                    None => out.push_str(&format!("{:>12}", "-")),
                }
            }
            out.push('\n');
        }
    }
    out
}

/// In-memory outcome of [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Every run in the results directory, sorted by key.
    pub runs: Vec<RunLine>,
    pub anchors: BTreeMap<String, AnchorEntry>,
    pub summary: Summary,
    /// Keys of cells that failed in this grid.
    pub failed: Vec<CellKey>,
    /// Cells executed by this invocation (the rest were already complete).
    pub executed: usize,
}

impl SweepResult {
    /// Rebuilds the result from files in `dir`.
    pub fn load(dir: &Path, auc_normalized: bool) -> Result<Self> {
        let runs = read_runs(dir)?;
        let anchors = read_anchors(dir)?;
        let summary = summarize(&runs, &anchors, auc_normalized)?;
        let failed = runs
            .iter()
            .filter(|r| r.status == RunStatus::Failed)
            .map(|r| r.key.clone())
            .collect();
        Ok(Self {
            runs,
            anchors,
            summary,
            failed,
            executed: 0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub results_dir: PathBuf,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
}

/// Settings that determine an environment's anchors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnchorParams {
    pub oracle_tol: f64,
    pub episodes: usize,
    pub episode_cap: usize,
    pub seed: u64,
}

impl Default for AnchorParams {
    fn default() -> Self {
        Self {
            oracle_tol: default_oracle_tol(),
            episodes: default_anchor_episodes(),
            episode_cap: TrainConfig::default().episode_cap,
            seed: 0,
        }
    }
}

/// Makes sure `anchors.json` in `dir` holds up-to-date anchors for every
/// named environment, computing only those that are missing or stale.
pub fn ensure_anchors(
    dir: &Path,
    envs: &[(String, &MdpSpec)],
    params: &AnchorParams,
) -> Result<BTreeMap<String, AnchorEntry>> {
    let mut anchors = read_anchors(dir)?;
    let mut changed = false;
    for (name, spec) in envs {
        let env_fp = fingerprint(&(spec, params));
        if anchors.get(name).map(|a| &a.env_fingerprint) == Some(&env_fp) {
            continue;
        }
        let (_, a) = env_anchors(
            spec,
            params.oracle_tol,
            params.episodes,
            params.episode_cap,
            params.seed,
        )
        .map_err(|e| match e {
            Error::Degenerate(msg) => Error::Degenerate(format!("{name}: {msg}")),
            other => other,
        })?;
        anchors.insert(
            name.clone(),
            AnchorEntry {
                env_fingerprint: env_fp,
                anchors: a,
            },
        );
        changed = true;
    }
    if changed || !dir.join(ANCHORS_FILE).exists() {
        write_anchors(dir, &anchors)?;
    }
    Ok(anchors)
}

fn run_cell(key: &CellKey, cfg: &TrainConfig, spec: &MdpSpec) -> RunLine {
    let fp = fingerprint(&(cfg, spec));
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        train::run_training(cfg, spec)
    }));
    let (status, error, record) = match outcome {
        Ok(Ok(record)) => (RunStatus::Ok, None, Some(record)),
        Ok(Err(e)) => (RunStatus::Failed, Some(e.to_string()), None),
        Err(_) => (RunStatus::Failed, Some("run panicked".to_string()), None),
    };
    RunLine {
        key: key.clone(),
        iterations: cfg.iterations,
        fingerprint: fp,
        status,
        error,
        record,
    }
}

/// Runs every missing cell of the grid on a bounded worker pool. Completed
/// runs are appended to `runs.jsonl` as they finish; cells whose
/// fingerprint already has a successful line are skipped, so an interrupted
/// sweep resumes where it stopped. At the end the file is rewritten in
/// canonical order.
pub fn run_sweep(config: &SweepConfig, opts: &SweepOptions) -> Result<SweepResult> {
    config.validate()?;
    let dir = &opts.results_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let specs = config
        .envs
        .iter()
        .map(|e| e.build(config.base.gamma))
        .collect::<Result<Vec<_>>>()?;
    let named: Vec<(String, &MdpSpec)> = config
        .envs
        .iter()
        .map(EnvConfig::name)
        .zip(specs.iter())
        .collect();
    let anchors = ensure_anchors(dir, &named, &config.anchor_params())?;

    let done: BTreeSet<String> = read_runs(dir)?
        .into_iter()
        .filter(|r| r.status == RunStatus::Ok)
        .map(|r| r.fingerprint)
        .collect();
    let cells = config.cells();
    let grid_keys: BTreeSet<CellKey> = cells.iter().map(|c| c.0.clone()).collect();
    let pending: Vec<_> = cells
        .into_iter()
        .filter(|(_, cfg, env_idx)| !done.contains(&fingerprint(&(cfg, &specs[*env_idx]))))
        .collect();
    let total = pending.len();
    log::info!("sweep: {} cells pending of {}", total, grid_keys.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<RunLine>();
    let write_result = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<()> {
            for (n, line) in rx.iter().enumerate() {
                append_run(dir, &line)?;
                match &line.error {
                    None => log::info!("[{}/{}] {} ok", n + 1, total, line.key),
                    Some(e) => log::warn!("[{}/{}] {} FAILED: {e}", n + 1, total, line.key),
                }
            }
            Ok(())
        });
        pool.install(|| {
            pending
                .par_iter()
                .for_each_with(tx, |tx, (key, cfg, env_idx)| {
                    let _ = tx.send(run_cell(key, cfg, &specs[*env_idx]));
                });
        });
        writer.join().expect("writer thread panicked")
    });
    write_result?;

    let runs = canonicalize_runs(dir)?;
    let summary = summarize(&runs, &anchors, config.auc_normalized)?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    let failed = runs
        .iter()
        .filter(|r| r.status == RunStatus::Failed && grid_keys.contains(&r.key))
        .map(|r| r.key.clone())
        .collect();
    Ok(SweepResult {
        runs,
        anchors,
        summary,
        failed,
        executed: total,
    })
}
