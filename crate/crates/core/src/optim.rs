//! Stateful first-order optimizers with explicit, resettable state.
//!
//! Every step function is value-in/value-out: it takes the current
//! parameters, gradient and [`OptimizerState`] by reference and returns new
//! ones. The stored state always holds the raw running averages `m` and `v`;
//! debiasing is applied to working copies inside the step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::FlatParams;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Rmsprop,
    Radam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::Adam,
        OptimizerKind::Rmsprop,
        OptimizerKind::Radam,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Radam => "radam",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_radam_threshold() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimHyper {
    pub kind: OptimizerKind,
    pub alpha: f64,
    #[serde(default = "OptimHyper::default_beta1")]
    pub beta1: f64,
    #[serde(default = "OptimHyper::default_beta2")]
    pub beta2: f64,
    #[serde(default = "OptimHyper::default_epsilon")]
    pub epsilon: f64,
    /// Weight of the pull towards the target parameters; 0 disables it.
    #[serde(default)]
    pub prox_coeff: f64,
    #[serde(default = "default_radam_threshold")]
    pub radam_threshold: f64,
}

impl OptimHyper {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_epsilon() -> f64 {
        1e-8
    }

    /// Adam with the usual `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
    pub fn adam(alpha: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            alpha,
            beta1: Self::default_beta1(),
            beta2: Self::default_beta2(),
            epsilon: Self::default_epsilon(),
            prox_coeff: 0.0,
            radam_threshold: default_radam_threshold(),
        }
    }

    pub fn with_kind(mut self, kind: OptimizerKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(self.prox_coeff >= 0.0) {
            return Err(Error::invalid("prox_coeff must be >= 0"));
        }
        if !self.radam_threshold.is_finite() {
            return Err(Error::invalid("radam_threshold must be finite"));
        }
        Ok(())
    }
}

/// Per-parameter first moment `m`, second moment `v` and step counter `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Tensor,
    pub v: Tensor,
    pub i: u64,
}

impl OptimizerState {
    pub fn shape(&self) -> &[usize] {
        self.m.shape()
    }

    /// Checkpoint block: `u64` LE step counter, `u64` LE element count, then
    /// `m` and `v` as `f64` LE.
    pub fn write_to<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(&self.i.to_le_bytes())?;
        out.write_all(&(self.m.len() as u64).to_le_bytes())?;
        for &x in self.m.as_slice().iter().chain(self.v.as_slice()) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: std::io::Read>(input: &mut R) -> Result<Self> {
        let i = crate::nn::read_u64(input)?;
        let n = crate::nn::read_u64(input)? as usize;
        if n == 0 || n > (1 << 32) {
            return Err(Error::Malformed(format!("implausible moment length {n}")));
        }
        let m = crate::nn::read_f64s(input, n)?;
        let v = crate::nn::read_f64s(input, n)?;
        Ok(Self {
            m: Tensor::vector(m)?,
            v: Tensor::vector(v)?,
            i,
        })
    }
}

/// What one step did, for instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Factor the first moment was divided by (`1 − β1^i`; 1 when unused).
    pub debias1: f64,
    /// Factor the second moment was divided by (`1 − β2^i`; 1 when unused).
    pub debias2: f64,
    pub rectifier_active: bool,
    pub grad_norm: f64,
    /// Counter value after the step.
    pub step: u64,
}

pub fn fresh_state(param_shape: &[usize]) -> Result<OptimizerState> {
    Ok(OptimizerState {
        m: Tensor::zeros(param_shape)?,
        v: Tensor::zeros(param_shape)?,
        i: 0,
    })
}

/// Zeroes the moments and the counter, keeping the shape.
pub fn reset_state(state: &OptimizerState) -> OptimizerState {
    fresh_state(state.shape()).expect("existing state has a valid shape")
}

fn check_inputs(params: &FlatParams, grad: &Tensor, state: &OptimizerState) -> Result<()> {
    params.values.check_same_shape(grad)?;
    params.values.check_same_shape(&state.m)?;
    params.values.check_same_shape(&state.v)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(())
}

/// Adam step. `m` and `v` are updated from the raw previous averages and
/// stored raw; the update uses `m / (1 − β1^i)` and `v / (1 − β2^i)`.
pub fn adam_step(
    params: &FlatParams,
    grad: &Tensor,
    state: &OptimizerState,
    h: &OptimHyper,
) -> Result<(FlatParams, OptimizerState, StepReport)> {
    adam_step_debias(params, grad, state, h, true)
}

/// [`adam_step`] with debiasing switchable. With `debias = false` both
/// factors are fixed to 1.
pub fn adam_step_debias(
    params: &FlatParams,
    grad: &Tensor,
    state: &OptimizerState,
    h: &OptimHyper,
    debias: bool,
) -> Result<(FlatParams, OptimizerState, StepReport)> {
    check_inputs(params, grad, state)?;
    let i = state.i + 1;
    let (debias1, debias2) = if debias {
        debias_factors(h.beta1, h.beta2, i)
    } else {
        (1.0, 1.0)
    };
    let mut next = state.clone();
    next.i = i;
    let mut out = params.clone();
    let (b1, b2) = (h.beta1, h.beta2);
    for (((p, &g), m), v) in out
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(next.m.as_mut_slice())
        .zip(next.v.as_mut_slice())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * (g * g);
        let m_hat = *m / debias1;
        let v_hat = *v / debias2;
        *p -= h.alpha * m_hat / (v_hat.sqrt() + h.epsilon);
    }
    let report = StepReport {
        debias1,
        debias2,
        rectifier_active: false,
        grad_norm: grad.l2_norm(),
        step: i,
    };
    Ok((out, next, report))
}

/// `(1 − β1^i, 1 − β2^i)`.
pub fn debias_factors(beta1: f64, beta2: f64, i: u64) -> (f64, f64) {
    (1.0 - pow_u64(beta1, i), 1.0 - pow_u64(beta2, i))
}

fn pow_u64(x: f64, n: u64) -> f64 {
    match i32::try_from(n) {
        Ok(n) => x.powi(n),
        Err(_) => x.powf(n as f64),
    }
}

/// RMSProp: `v ← β2·v + (1−β2)·g²`, `w ← w − α·g/(√v + ε)`. `m` is left at
/// zero.
pub fn rmsprop_step(
    params: &FlatParams,
    grad: &Tensor,
    state: &OptimizerState,
    h: &OptimHyper,
) -> Result<(FlatParams, OptimizerState, StepReport)> {
    check_inputs(params, grad, state)?;
    let mut next = state.clone();
    next.i += 1;
    let mut out = params.clone();
    let b2 = h.beta2;
    for ((p, &g), v) in out
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(next.v.as_mut_slice())
    {
        *v = b2 * *v + (1.0 - b2) * (g * g);
        *p -= h.alpha * g / (v.sqrt() + h.epsilon);
    }
    let report = StepReport {
        debias1: 1.0,
        debias2: 1.0,
        rectifier_active: false,
        grad_norm: grad.l2_norm(),
        step: next.i,
    };
    Ok((out, next, report))
}

/// Length of the approximated simple moving average, `ρ_i`, and its limit
/// `ρ∞` for Rectified Adam.
pub fn radam_rho(beta2: f64, i: u64) -> (f64, f64) {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2i = pow_u64(beta2, i);
    (rho_inf - 2.0 * i as f64 * b2i / (1.0 - b2i), rho_inf)
}

/// Variance rectification term `r_i`; only meaningful for `ρ_i > 4`.
pub fn radam_rectifier(rho: f64, rho_inf: f64) -> f64 {
    (((rho - 4.0) * (rho - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt()
}

/// Rectified Adam. While `ρ_i` is at or below `radam_threshold` the update
/// is the debiased momentum alone.
pub fn radam_step(
    params: &FlatParams,
    grad: &Tensor,
    state: &OptimizerState,
    h: &OptimHyper,
) -> Result<(FlatParams, OptimizerState, StepReport)> {
    check_inputs(params, grad, state)?;
    let i = state.i + 1;
    let (debias1, debias2) = debias_factors(h.beta1, h.beta2, i);
    let (rho, rho_inf) = radam_rho(h.beta2, i);
    let active = rho > h.radam_threshold;
    let rect = if active {
        radam_rectifier(rho, rho_inf)
    } else {
        0.0
    };
    let mut next = state.clone();
    next.i = i;
    let mut out = params.clone();
    let (b1, b2) = (h.beta1, h.beta2);
    for (((p, &g), m), v) in out
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(next.m.as_mut_slice())
        .zip(next.v.as_mut_slice())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * (g * g);
        let m_hat = *m / debias1;
        if active {
            let v_hat = *v / debias2;
            *p -= h.alpha * rect * m_hat / (v_hat.sqrt() + h.epsilon);
        } else {
            *p -= h.alpha * m_hat;
        }
    }
    let report = StepReport {
        debias1,
        debias2,
        rectifier_active: active,
        grad_norm: grad.l2_norm(),
        step: i,
    };
    Ok((out, next, report))
}

/// Plain gradient descent; only the counter moves.
pub fn sgd_step(
    params: &FlatParams,
    grad: &Tensor,
    state: &OptimizerState,
    h: &OptimHyper,
) -> Result<(FlatParams, OptimizerState, StepReport)> {
    check_inputs(params, grad, state)?;
    let mut out = params.clone();
    for (p, &g) in out.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *p -= h.alpha * g;
    }
    let mut next = state.clone();
    next.i += 1;
    let report = StepReport {
        debias1: 1.0,
        debias2: 1.0,
        rectifier_active: false,
        grad_norm: grad.l2_norm(),
        step: next.i,
    };
    Ok((out, next, report))
}

/// Dispatches on `h.kind`.
pub fn step(
    params: &FlatParams,
    grad: &Tensor,
    state: &OptimizerState,
    h: &OptimHyper,
) -> Result<(FlatParams, OptimizerState, StepReport)> {
    match h.kind {
        OptimizerKind::Sgd => sgd_step(params, grad, state, h),
        OptimizerKind::Adam => adam_step(params, grad, state, h),
        OptimizerKind::Rmsprop => rmsprop_step(params, grad, state, h),
        OptimizerKind::Radam => radam_step(params, grad, state, h),
    }
}

/// `grad + prox_coeff·(w − θ)`: the gradient of the proximal penalty
/// `½·prox_coeff·‖w − θ‖²` added to the loss gradient.
pub fn apply_proximal(
    grad: &Tensor,
    w: &FlatParams,
    theta: &FlatParams,
    prox_coeff: f64,
) -> Result<Tensor> {
    grad.check_same_shape(&w.values)?;
    w.values.check_same_shape(&theta.values)?;
    if !(prox_coeff >= 0.0) {
        return Err(Error::invalid("prox_coeff must be >= 0"));
    }
    if prox_coeff == 0.0 {
        return Ok(grad.clone());
    }
    let mut out = grad.clone();
    for ((g, &a), &b) in out
        .as_mut_slice()
        .iter_mut()
        .zip(w.as_slice())
        .zip(theta.as_slice())
    {
        *g += prox_coeff * (a - b);
    }
    Ok(out)
}
