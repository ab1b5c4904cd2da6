use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureMap {
    OneHot,
    /// Fixed per-state vectors with entries uniform in `[-1, 1)`.
    RandomFeatures {
        dim: usize,
        seed: u64,
    },
}

/// Where episodes begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StartState {
    Fixed { state: usize },
    Uniform,
}

/// Finite MDP with dense tables: `transition[s][a][s']` and `reward[s][a]`.
///
/// Transitions into a terminal state end the episode; the value of a
/// terminal successor is taken as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub terminal: Vec<usize>,
    pub feature_map: FeatureMap,
    pub start: StartState,
}

impl MdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::invalid(
                "MDP needs at least one state and one action",
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.transition.len() != self.n_states || self.reward.len() != self.n_states {
            return Err(Error::invalid("table row count differs from n_states"));
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions || self.reward[s].len() != self.n_actions
            {
                return Err(Error::invalid(format!(
                    "state {s}: wrong number of actions"
                )));
            }
            for a in 0..self.n_actions {
                let row = &self.transition[s][a];
                if row.len() != self.n_states {
                    return Err(Error::invalid(format!("P[{s}][{a}] has wrong length")));
                }
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::invalid(format!("P[{s}][{a}] has invalid entries")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("P[{s}][{a}] sums to {total}")));
                }
                if !self.reward[s][a].is_finite() {
                    return Err(Error::invalid(format!("R[{s}][{a}] is not finite")));
                }
            }
        }
        if let Some(&t) = self.terminal.iter().find(|&&t| t >= self.n_states) {
            return Err(Error::invalid(format!("terminal state {t} out of range")));
        }
        if let StartState::Fixed { state } = self.start {
            self.check_state(state)?;
        }
        if let FeatureMap::RandomFeatures { dim: 0, .. } = self.feature_map {
            return Err(Error::invalid("random feature dimension must be positive"));
        }
        Ok(())
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal.contains(&state)
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.n_states {
            return Err(Error::invalid(format!(
                "state {state} out of range for {} states",
                self.n_states
            )));
        }
        Ok(())
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.n_actions {
            return Err(Error::invalid(format!(
                "action {action} out of range for {} actions",
                self.n_actions
            )));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        match self.feature_map {
            FeatureMap::OneHot => self.n_states,
            FeatureMap::RandomFeatures { dim, .. } => dim,
        }
    }

    /// Feature vector of every state, indexed by state id.
    pub fn feature_table(&self) -> Result<Vec<Tensor>> {
        match self.feature_map {
            FeatureMap::OneHot => (0..self.n_states)
                .map(|s| {
                    let mut x = vec![0.0; self.n_states];
                    x[s] = 1.0;
                    Tensor::vector(x)
                })
                .collect(),
            FeatureMap::RandomFeatures { dim, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..self.n_states)
                    .map(|_| Tensor::vector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                    .collect()
            }
        }
    }

    pub fn sample_start<R: Rng>(&self, rng: &mut R) -> usize {
        match self.start {
            StartState::Fixed { state } => state,
            StartState::Uniform => rng.gen_range(0..self.n_states),
        }
    }

    pub fn with_feature_map(mut self, feature_map: FeatureMap) -> Self {
        self.feature_map = feature_map;
        self
    }
}

/// Deterministic 4-action grid. State id is `y * width + x`; actions are
/// up, right, down, left. Entering `goal` pays 1 and ends the episode,
/// every other move pays `step_penalty`, and bumping a wall leaves the agent
/// in place. The goal itself is absorbing with zero reward. Episodes start
/// in the top-left cell.
///
/// `seed` only parameterizes the random feature map, should one be
/// attached later via [`MdpSpec::with_feature_map`].
pub fn make_gridworld(
    width: usize,
    height: usize,
    goal: (usize, usize),
    step_penalty: f64,
    gamma: f64,
    seed: u64,
) -> Result<MdpSpec> {
    let _ = seed;
    if width == 0 || height == 0 || width * height < 2 {
        return Err(Error::invalid(format!(
            "gridworld {width}x{height} is degenerate"
        )));
    }
    if goal.0 >= width || goal.1 >= height {
        return Err(Error::invalid(format!(
            "goal {goal:?} lies outside the grid"
        )));
    }
    let n = width * height;
    let goal_id = goal.1 * width + goal.0;
    let mut transition = vec![vec![vec![0.0; n]; 4]; n];
    let mut reward = vec![vec![0.0; 4]; n];
    for y in 0..height {
        for x in 0..width {
            let s = y * width + x;
            for a in 0..4 {
                if s == goal_id {
                    transition[s][a][s] = 1.0;
                    continue;
                }
                let (nx, ny) = match a {
                    0 => (x, y.saturating_sub(1)),
                    1 => ((x + 1).min(width - 1), y),
                    2 => (x, (y + 1).min(height - 1)),
                    _ => (x.saturating_sub(1), y),
                };
                let next = ny * width + nx;
                transition[s][a][next] = 1.0;
                reward[s][a] = if next == goal_id { 1.0 } else { step_penalty };
            }
        }
    }
    let spec = MdpSpec {
        n_states: n,
        n_actions: 4,
        transition,
        reward,
        gamma,
        terminal: vec![goal_id],
        feature_map: FeatureMap::OneHot,
        start: StartState::Fixed { state: 0 },
    };
    spec.validate()?;
    Ok(spec)
}

/// Random "garnet" MDP: every `(s, a)` moves to `branching` distinct states
/// drawn uniformly, with probabilities from normalized exponential draws
/// (a flat Dirichlet). Rewards are uniform in `(-1, 1)`. No terminal states;
/// episodes start uniformly at random.
pub fn make_garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    gamma: f64,
    seed: u64,
) -> Result<MdpSpec> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::invalid(
            "garnet needs at least one state and one action",
        ));
    }
    if branching == 0 || branching > n_states {
        return Err(Error::invalid(format!(
            "branching {branching} must lie in 1..={n_states}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let succ = sample_indices(&mut rng, n_states, branching).into_vec();
            let draws: Vec<f64> = (0..branching)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln() + f64::MIN_POSITIVE)
                .collect();
            let total: f64 = draws.iter().sum();
            for (&next, d) in succ.iter().zip(&draws) {
                transition[s][a][next] = d / total;
            }
            reward[s][a] = rng.gen_range(-1.0..1.0);
        }
    }
    let spec = MdpSpec {
        n_states,
        n_actions,
        transition,
        reward,
        gamma,
        terminal: Vec::new(),
        feature_map: FeatureMap::OneHot,
        start: StartState::Uniform,
    };
    spec.validate()?;
    Ok(spec)
}

/// Samples one environment step. From a terminal state the agent stays put,
/// collects that state's reward (zero for the built-in generators) and the
/// step is flagged terminal.
pub fn env_step<R: Rng>(
    spec: &MdpSpec,
    state: usize,
    action: usize,
    rng: &mut R,
) -> Result<(usize, f64, bool)> {
    spec.check_state(state)?;
    spec.check_action(action)?;
    let reward = spec.reward[state][action];
    if spec.is_terminal(state) {
        return Ok((state, reward, true));
    }
    let row = &spec.transition[state][action];
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut next = None;
    for (s, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        next = Some(s);
        if u < acc {
            break;
        }
    }
    let next = next.expect("validated rows have positive mass");
    Ok((next, reward, spec.is_terminal(next)))
}

/// Tabular action values, `values[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        crate::nn::argmax(self.row(s))
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// One application of the optimality operator:
/// `(T Q)(s,a) = R(s,a) + γ Σ_s' P(s'|s,a) max_a' Q(s',a')`, with terminal
/// successors contributing zero.
pub fn bellman_backup(spec: &MdpSpec, q: &QTable) -> QTable {
    let v: Vec<f64> = (0..spec.n_states)
        .map(|s| {
            if spec.is_terminal(s) {
                0.0
            } else {
                q.state_value(s)
            }
        })
        .collect();
    let mut out = QTable::zeros(spec.n_states, spec.n_actions);
    for s in 0..spec.n_states {
        for a in 0..spec.n_actions {
            let expect: f64 = spec.transition[s][a]
                .iter()
                .zip(&v)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, v)| p * v)
                .sum();
            out.values[s * spec.n_actions + a] = spec.reward[s][a] + spec.gamma * expect;
        }
    }
    out
}

/// Iterates [`bellman_backup`] from zero until successive iterates differ by
/// less than `tol` in sup-norm. The returned table then satisfies
/// `‖T Q − Q‖∞ < tol`.
pub fn value_iteration_oracle(spec: &MdpSpec, tol: f64) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    spec.validate()?;
    let mut q = QTable::zeros(spec.n_states, spec.n_actions);
    loop {
        let next = bellman_backup(spec, &q);
        let change = next.sup_distance(&q);
        q = next;
        if change < tol {
            return Ok(q);
        }
    }
}
