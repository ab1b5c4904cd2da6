use crate::error::{Error, Result};
use crate::nn::{forward_slice, FlatParams, MlpDef};

use super::Transition;

/// Target parameters `theta` and online parameters `w`, with identical
/// layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub theta: FlatParams,
    pub w: FlatParams,
}

impl AgentParams {
    /// Both copies start from `init`.
    pub fn new(init: FlatParams) -> Self {
        Self {
            theta: init.clone(),
            w: init,
        }
    }
}

/// Hard target update: `theta` becomes a copy of `w`.
pub fn sync_target(agent: &AgentParams) -> AgentParams {
    AgentParams {
        theta: agent.w.clone(),
        w: agent.w.clone(),
    }
}

/// `r + γ·max_a' q(s', a'; θ)`, or `r` when the transition is terminal.
pub fn bellman_target(
    def: &MlpDef,
    theta: &FlatParams,
    transition: &Transition,
    gamma: f64,
) -> Result<f64> {
    if theta.len() != def.param_count() {
        return Err(Error::DimensionMismatch {
            expected: def.param_count(),
            got: theta.len(),
        });
    }
    if transition.terminal {
        return Ok(transition.r);
    }
    if transition.s_next.len() != def.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: def.input_dim(),
            got: transition.s_next.len(),
        });
    }
    let q_next = forward_slice(def, theta.as_slice(), transition.s_next.as_slice());
    let best = q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(transition.r + gamma * best)
}
