//! The iteration driver: `T` outer iterations, each running `K` optimizer
//! steps on the loss defined by the frozen target parameters, then a hard
//! target sync and a greedy evaluation.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Activation, FlatParams, MlpDef};
use crate::optim::{self, OptimHyper, OptimizerState, StepReport};
use crate::rl::{self, AgentParams, MdpSpec, ReplayBuffer, Transition};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetKind {
    /// The optimizer state persists for the whole run.
    Never,
    /// Fresh optimizer state at the start of every iteration.
    PerIteration,
    /// Reset before any step with probability `probability` (default `1/K`).
    Random,
}

impl ResetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResetKind::Never => "never",
            ResetKind::PerIteration => "per_iteration",
            ResetKind::Random => "random",
        }
    }
}

impl std::fmt::Display for ResetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetPolicy {
    pub kind: ResetKind,
    /// Only used by [`ResetKind::Random`]; `None` means `1/K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

impl ResetPolicy {
    pub fn new(kind: ResetKind) -> Self {
        Self {
            kind,
            probability: None,
        }
    }

    pub fn reset_probability(&self, inner_steps: usize) -> f64 {
        self.probability.unwrap_or(1.0 / inner_steps.max(1) as f64)
    }

    fn validate(&self) -> Result<()> {
        if let Some(p) = self.probability {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!(
                    "reset probability must lie in (0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Whether to reset the optimizer right before inner step `k` of an
/// iteration with `inner_steps` steps.
pub fn decide_reset<R: Rng>(
    policy: &ResetPolicy,
    k: usize,
    inner_steps: usize,
    rng: &mut R,
) -> bool {
    match policy.kind {
        ResetKind::Never => false,
        ResetKind::PerIteration => k == 0,
        ResetKind::Random => {
            let p = policy.reset_probability(inner_steps);
            p >= 1.0 || rng.gen::<f64>() < p
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// `K`: optimizer steps per iteration.
    pub inner_steps: usize,
    /// `T`: number of iterations (target syncs).
    pub iterations: usize,
    pub batch_size: usize,
    /// Environment steps collected before each gradient step.
    pub env_steps_per_grad: usize,
    pub eval_episodes: usize,
    /// Episode length cap for collection and evaluation.
    pub episode_cap: usize,
    pub seed: u64,
    pub optimizer: OptimHyper,
    pub reset: ResetPolicy,
    pub gamma: f64,
    pub prefill_steps: usize,
    pub epsilon_greedy: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Replace the `K` gradient steps with an exact least-squares solve over
    /// the full model-weighted transition set. Needs one-hot features and a
    /// network without hidden layers.
    pub exact_minimization: bool,
    /// Fault injection: poison the gradient at this global step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nan_grad_at_step: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            inner_steps: 8,
            iterations: 64,
            batch_size: 32,
            env_steps_per_grad: 1,
            eval_episodes: 10,
            episode_cap: 50,
            seed: 0,
            optimizer: OptimHyper::adam(1e-3),
            reset: ResetPolicy::new(ResetKind::PerIteration),
            gamma: 0.9,
            prefill_steps: 500,
            epsilon_greedy: 0.1,
            buffer_capacity: 10_000,
            hidden: vec![32],
            activation: Activation::Relu,
            exact_minimization: false,
            nan_grad_at_step: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::invalid("inner_steps (K) must be >= 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations (T) must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.eval_episodes == 0 || self.episode_cap == 0 {
            return Err(Error::invalid("eval_episodes and episode_cap must be >= 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::invalid("buffer_capacity must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon_greedy) {
            return Err(Error::invalid("epsilon_greedy must lie in [0, 1]"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        self.optimizer.validate()?;
        self.reset.validate()
    }

    /// Total optimizer steps, `K·T`.
    pub fn gradient_budget(&self) -> u64 {
        self.inner_steps as u64 * self.iterations as u64
    }

    pub fn mlp_def(&self, spec: &MdpSpec) -> Result<MlpDef> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(spec.feature_dim());
        widths.extend(&self.hidden);
        widths.push(spec.n_actions);
        MlpDef::new(widths, self.activation, Streams::init_seed(self.seed))
    }
}

/// Short hex digest of a serializable value's JSON form.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}

/// One training run's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Mean undiscounted greedy return after each iteration; length `T`.
    pub eval_returns: Vec<f64>,
    /// Optimizer resets performed in each iteration.
    pub resets: Vec<u32>,
    /// Mean batch loss over each iteration's steps.
    pub mean_loss: Vec<f64>,
    pub optimizer_steps: u64,
    pub fingerprint: String,
    pub seed: u64,
    /// Not serialized, so that records of identical runs are byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub def: MlpDef,
    pub agent: AgentParams,
    pub opt_state: OptimizerState,
}

/// Per-step instrumentation handed to observers.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub t: usize,
    pub k: usize,
    pub reset: bool,
    pub report: &'a StepReport,
    pub loss: f64,
    pub batch: &'a [Transition],
    pub theta: &'a FlatParams,
    pub w_before: &'a FlatParams,
    pub w_after: &'a FlatParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub resets: u32,
    pub steps: u64,
    pub mean_loss: f64,
}

/// Independent random streams derived from one run seed.
struct Streams {
    env: ChaCha8Rng,
    explore: ChaCha8Rng,
    batch: ChaCha8Rng,
    reset: ChaCha8Rng,
    eval: ChaCha8Rng,
}

impl Streams {
    const ENV: u64 = 1;
    const EXPLORE: u64 = 2;
    const BATCH: u64 = 3;
    const RESET: u64 = 4;
    const EVAL: u64 = 5;
    const INIT: u64 = 6;

    fn stream(seed: u64, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        rng
    }

    fn new(seed: u64) -> Self {
        Self {
            env: Self::stream(seed, Self::ENV),
            explore: Self::stream(seed, Self::EXPLORE),
            batch: Self::stream(seed, Self::BATCH),
            reset: Self::stream(seed, Self::RESET),
            eval: Self::stream(seed, Self::EVAL),
        }
    }

    fn init_seed(seed: u64) -> u64 {
        Self::stream(seed, Self::INIT).next_u64()
    }
}

/// Mutable state of one run.
pub struct Trainer<'a> {
    config: &'a TrainConfig,
    spec: &'a MdpSpec,
    def: MlpDef,
    features: Vec<Arc<Tensor>>,
    agent: AgentParams,
    buffer: ReplayBuffer,
    opt_state: OptimizerState,
    streams: Streams,
    env_state: usize,
    episode_len: usize,
    global_step: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &'a TrainConfig, spec: &'a MdpSpec) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let def = config.mlp_def(spec)?;
        if config.exact_minimization {
            if def.n_layers() != 1 || spec.feature_map != rl::FeatureMap::OneHot {
                return Err(Error::Config(
                    "exact_minimization needs one-hot features and no hidden layers".into(),
                ));
            }
        }
        let features: Vec<Arc<Tensor>> = spec.feature_table()?.into_iter().map(Arc::new).collect();
        let init = nn::init_params(&def)?;
        let opt_state = optim::fresh_state(&[def.param_count()])?;
        let mut streams = Streams::new(config.seed);
        let env_state = spec.sample_start(&mut streams.env);
        let buffer_capacity = if config.exact_minimization {
            spec.n_states * spec.n_actions * spec.n_states
        } else {
            config.buffer_capacity
        };
        let mut trainer = Self {
            config,
            spec,
            def,
            features,
            agent: AgentParams::new(init),
            buffer: ReplayBuffer::new(buffer_capacity.max(1))?,
            opt_state,
            streams,
            env_state,
            episode_len: 0,
            global_step: 0,
        };
        if config.exact_minimization {
            trainer.fill_model_buffer();
        } else {
            for _ in 0..config.prefill_steps {
                trainer.collect_step(true)?;
            }
        }
        Ok(trainer)
    }

    pub fn def(&self) -> &MlpDef {
        &self.def
    }

    pub fn agent(&self) -> &AgentParams {
        &self.agent
    }

    pub fn opt_state(&self) -> &OptimizerState {
        &self.opt_state
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Hard target update `θ ← w`, as done after every inner iteration.
    pub fn sync_target(&mut self) {
        self.agent = rl::sync_target(&self.agent);
    }

    /// Every `(s, a, s')` with positive probability, weighted by it.
    fn fill_model_buffer(&mut self) {
        let spec = self.spec;
        for s in 0..spec.n_states {
            for a in 0..spec.n_actions {
                for (next, &p) in spec.transition[s][a].iter().enumerate() {
                    if p > 0.0 {
                        self.buffer.push(
                            Transition::shared(
                                self.features[s].clone(),
                                a,
                                spec.reward[s][a],
                                self.features[next].clone(),
                                spec.is_terminal(next),
                            )
                            .with_weight(p),
                        );
                    }
                }
            }
        }
    }

    fn greedy(&self, params: &FlatParams, state: usize) -> usize {
        let q = nn::forward_slice(
            &self.def,
            params.as_slice(),
            self.features[state].as_slice(),
        );
        nn::argmax(&q)
    }

    /// One environment step under ε-greedy on `w` (uniform when `random`).
    fn collect_step(&mut self, random: bool) -> Result<()> {
        let s = self.env_state;
        let explore = random || self.streams.explore.gen::<f64>() < self.config.epsilon_greedy;
        let a = if explore {
            self.streams.explore.gen_range(0..self.spec.n_actions)
        } else {
            self.greedy(&self.agent.w, s)
        };
        let (next, r, terminal) = rl::env_step(self.spec, s, a, &mut self.streams.env)?;
        self.buffer.push(Transition::shared(
            self.features[s].clone(),
            a,
            r,
            self.features[next].clone(),
            terminal,
        ));
        self.episode_len += 1;
        if terminal || self.episode_len >= self.config.episode_cap {
            self.env_state = self.spec.sample_start(&mut self.streams.env);
            self.episode_len = 0;
        } else {
            self.env_state = next;
        }
        Ok(())
    }

    /// Inner loop of iteration `t`: start from `w = θ`, then `K` times
    /// optionally reset, collect, sample, differentiate and step.
    pub fn run_inner_iteration(
        &mut self,
        t: usize,
        observer: &mut dyn FnMut(&StepEvent<'_>),
    ) -> Result<IterationStats> {
        self.agent.w = self.agent.theta.clone();
        if self.config.exact_minimization {
            self.agent.w = self.exact_minimizer()?;
            return Ok(IterationStats {
                resets: 0,
                steps: 0,
                mean_loss: rl_loss(&self.def, &self.agent, &self.buffer, self.config.gamma)?,
            });
        }
        let k_total = self.config.inner_steps;
        let mut resets = 0;
        let mut loss_sum = 0.0;
        for k in 0..k_total {
            let reset = decide_reset(&self.config.reset, k, k_total, &mut self.streams.reset);
            if reset {
                self.opt_state = optim::reset_state(&self.opt_state);
                resets += 1;
            }
            for _ in 0..self.config.env_steps_per_grad {
                self.collect_step(false)?;
            }
            let batch = rl::sample_batch(
                &self.buffer,
                self.config.batch_size,
                &mut self.streams.batch,
            )?;
            let (loss, mut grad) = nn::grad_td_loss(
                &self.def,
                &self.agent.w,
                &self.agent.theta,
                &batch,
                self.config.gamma,
            )?;
            if self.config.nan_grad_at_step == Some(self.global_step) {
                grad.as_mut_slice()[0] = f64::NAN;
            }
            let grad = optim::apply_proximal(
                &grad,
                &self.agent.w,
                &self.agent.theta,
                self.config.optimizer.prox_coeff,
            )?;
            let (w_next, state_next, report) = optim::step(
                &self.agent.w,
                &grad,
                &self.opt_state,
                &self.config.optimizer,
            )?;
            observer(&StepEvent {
                t,
                k,
                reset,
                report: &report,
                loss,
                batch: &batch,
                theta: &self.agent.theta,
                w_before: &self.agent.w,
                w_after: &w_next,
            });
            self.agent.w = w_next;
            self.opt_state = state_next;
            self.global_step += 1;
            loss_sum += loss;
        }
        if !self.agent.w.values.is_finite() {
            return Err(Error::NonFinite("online parameters"));
        }
        Ok(IterationStats {
            resets,
            steps: k_total as u64,
            mean_loss: loss_sum / k_total as f64,
        })
    }

    /// Closed-form minimizer of the weighted loss for a one-hot linear
    /// network: each `q(s, a)` becomes the weighted mean of its targets.
    /// Pairs absent from the buffer keep their current value.
    fn exact_minimizer(&self) -> Result<FlatParams> {
        let n_in = self.def.input_dim();
        let n_out = self.def.output_dim();
        let mut num = vec![0.0; n_in * n_out];
        let mut den = vec![0.0; n_in * n_out];
        for tr in self.buffer.iter() {
            let target = rl::bellman_target(&self.def, &self.agent.theta, tr, self.config.gamma)?;
            let s = one_hot_index(tr.s.as_slice())?;
            num[tr.a * n_in + s] += tr.weight * target;
            den[tr.a * n_in + s] += tr.weight;
        }
        let mut w = self.agent.theta.clone();
        let params = w.as_mut_slice();
        let biases: Vec<f64> = params[n_in * n_out..].to_vec();
        for a in 0..n_out {
            for s in 0..n_in {
                let idx = a * n_in + s;
                if den[idx] > 0.0 {
                    params[idx] = num[idx] / den[idx] - biases[a];
                }
            }
        }
        Ok(w)
    }

    /// Mean undiscounted return of the greedy policy on `θ`.
    pub fn evaluate(&mut self) -> Result<f64> {
        let policy: Vec<usize> = (0..self.spec.n_states)
            .map(|s| self.greedy(&self.agent.theta, s))
            .collect();
        let mut total = 0.0;
        for _ in 0..self.config.eval_episodes {
            let mut s = self.spec.sample_start(&mut self.streams.eval);
            for _ in 0..self.config.episode_cap {
                if self.spec.is_terminal(s) {
                    break;
                }
                let (next, r, terminal) =
                    rl::env_step(self.spec, s, policy[s], &mut self.streams.eval)?;
                total += r;
                s = next;
                if terminal {
                    break;
                }
            }
        }
        Ok(total / self.config.eval_episodes as f64)
    }

    /// Runs all `T` iterations.
    pub fn run(mut self, observer: &mut dyn FnMut(&StepEvent<'_>)) -> Result<TrainOutcome> {
        let started = Instant::now();
        let t_total = self.config.iterations;
        let mut eval_returns = Vec::with_capacity(t_total);
        let mut resets = Vec::with_capacity(t_total);
        let mut mean_loss = Vec::with_capacity(t_total);
        let mut optimizer_steps = 0;
        for t in 0..t_total {
            let stats = self.run_inner_iteration(t, observer)?;
            self.sync_target();
            eval_returns.push(self.evaluate()?);
            resets.push(stats.resets);
            mean_loss.push(stats.mean_loss);
            optimizer_steps += stats.steps;
        }
        let record = RunRecord {
            eval_returns,
            resets,
            mean_loss,
            optimizer_steps,
            fingerprint: fingerprint(&(self.config, self.spec)),
            seed: self.config.seed,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        };
        Ok(TrainOutcome {
            record,
            def: self.def,
            agent: self.agent,
            opt_state: self.opt_state,
        })
    }
}

fn one_hot_index(x: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in x.iter().enumerate() {
        if v == 1.0 && hot.is_none() {
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::invalid("features are not one-hot"));
        }
    }
    hot.ok_or_else(|| Error::invalid("features are not one-hot"))
}

fn rl_loss(def: &MlpDef, agent: &AgentParams, buffer: &ReplayBuffer, gamma: f64) -> Result<f64> {
    let all: Vec<Transition> = buffer.iter().cloned().collect();
    nn::td_loss(def, &agent.w, &agent.theta, &all, gamma)
}

/// Runs one training job end to end.
pub fn run_training(config: &TrainConfig, env_spec: &MdpSpec) -> Result<RunRecord> {
    Ok(train(config, env_spec)?.record)
}

/// Like [`run_training`] but also returns the final parameters and
/// optimizer state.
pub fn train(config: &TrainConfig, env_spec: &MdpSpec) -> Result<TrainOutcome> {
    Trainer::new(config, env_spec)?.run(&mut |_| {})
}

/// Greedy action table of a network over every state of `spec`.
pub fn q_table(def: &MlpDef, params: &FlatParams, spec: &MdpSpec) -> Result<rl::QTable> {
    let features = spec.feature_table()?;
    let mut q = rl::QTable::zeros(spec.n_states, spec.n_actions);
    for (s, x) in features.iter().enumerate() {
        let row = nn::forward(def, params, x)?;
        q.values[s * spec.n_actions..(s + 1) * spec.n_actions].copy_from_slice(row.as_slice());
    }
    Ok(q)
}
