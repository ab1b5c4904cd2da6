//! Fully-connected Q-network with hand-written forward and backward passes.
//!
//! Parameter layout inside [`FlatParams`]: layers in order; for each layer
//! `l` with `n_in = widths[l]` and `n_out = widths[l + 1]`, first the weight
//! matrix of shape `(n_out, n_in)` in row-major order (row `o` holds the
//! incoming weights of output unit `o`), then the `n_out` biases.

use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::Transition;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Network architecture. The activation is applied to hidden layers only;
/// the output layer is affine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpDef {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpDef {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, seed: u64) -> Result<Self> {
        let def = Self {
            layer_widths,
            activation,
            seed,
        };
        def.validate()?;
        Ok(def)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::invalid(
                "an MLP needs at least input and output widths",
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layer_widths)
    }

    /// Offset of layer `l`'s weight block; its biases follow at
    /// `offset + n_out * n_in`.
    pub fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.layer_widths[..=layer])
    }
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// All weights and biases of one network, laid out as described in the
/// module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    pub values: Tensor,
}

impl FlatParams {
    pub fn zeros(def: &MlpDef) -> Result<Self> {
        Ok(Self {
            values: Tensor::zeros(&[def.param_count()])?,
        })
    }

    pub fn from_vec(def: &MlpDef, values: Vec<f64>) -> Result<Self> {
        if values.len() != def.param_count() {
            return Err(Error::DimensionMismatch {
                expected: def.param_count(),
                got: values.len(),
            });
        }
        Ok(Self {
            values: Tensor::vector(values)?,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.values.as_mut_slice()
    }

    fn check(&self, def: &MlpDef) -> Result<()> {
        if self.len() != def.param_count() {
            return Err(Error::DimensionMismatch {
                expected: def.param_count(),
                got: self.len(),
            });
        }
        Ok(())
    }

    /// Writes the documented checkpoint block: `u64` LE count of widths,
    /// each width as `u64` LE, then every parameter as `f64` LE.
    pub fn write_to<W: Write>(&self, widths: &[usize], out: &mut W) -> std::io::Result<()> {
        out.write_all(&(widths.len() as u64).to_le_bytes())?;
        for &w in widths {
            out.write_all(&(w as u64).to_le_bytes())?;
        }
        for &x in self.as_slice() {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Inverse of [`FlatParams::write_to`]; returns the stored widths too.
    pub fn read_from<R: Read>(input: &mut R) -> Result<(Vec<usize>, FlatParams)> {
        let n = read_u64(input)? as usize;
        if !(2..=1024).contains(&n) {
            return Err(Error::Malformed(format!("implausible width count {n}")));
        }
        let widths = (0..n)
            .map(|_| read_u64(input).map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        if widths.contains(&0) {
            return Err(Error::Malformed("zero layer width".into()));
        }
        let count = param_count(&widths);
        let values = read_f64s(input, count)?;
        Ok((
            widths,
            FlatParams {
                values: Tensor::vector(values)?,
            },
        ))
    }
}

pub(crate) fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Malformed(format!("truncated integer: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64s<R: Read>(input: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..count)
        .map(|_| {
            input
                .read_exact(&mut buf)
                .map_err(|e| Error::Malformed(format!("truncated float block: {e}")))?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

/// Glorot-uniform weights with bound `sqrt(6 / (fan_in + fan_out))` per
/// layer, zero biases. Deterministic in `def.seed`.
pub fn init_params(def: &MlpDef) -> Result<FlatParams> {
    def.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(def.seed);
    let mut values = Vec::with_capacity(def.param_count());
    for w in def.layer_widths.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        values.extend((0..n_in * n_out).map(|_| rng.gen_range(-bound..bound)));
        values.extend(std::iter::repeat(0.0).take(n_out));
    }
    FlatParams::from_vec(def, values)
}

/// Pre-activations of every layer and post-activations of every layer
/// including the input.
struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

/// Indices of the nonzero entries when the input is sparse enough to be
/// worth skipping zeros.
fn nonzero(x: &[f64]) -> Option<Vec<usize>> {
    let mut idx = Vec::with_capacity(x.len());
    for (i, &v) in x.iter().enumerate() {
        if v != 0.0 {
            if (idx.len() + 1) * 2 > x.len() {
                return None;
            }
            idx.push(i);
        }
    }
    Some(idx)
}

fn forward_trace(def: &MlpDef, params: &[f64], x: &[f64]) -> Trace {
    let n_layers = def.n_layers();
    let mut pre = Vec::with_capacity(n_layers);
    let mut post = Vec::with_capacity(n_layers + 1);
    post.push(x.to_vec());
    let mut offset = 0;
    for l in 0..n_layers {
        let (n_in, n_out) = (def.layer_widths[l], def.layer_widths[l + 1]);
        let weights = &params[offset..offset + n_in * n_out];
        let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let input = &post[l];
        let nz = nonzero(input);
        let z: Vec<f64> = (0..n_out)
            .map(|o| {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let dot = match &nz {
                    Some(idx) => idx.iter().map(|&i| row[i] * input[i]).sum::<f64>(),
                    None => row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>(),
                };
                dot + biases[o]
            })
            .collect();
        let a = if l + 1 < n_layers {
            z.iter().map(|&v| def.activation.apply(v)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
        post.push(a);
    }
    Trace { pre, post }
}

/// Accumulates `d(out)/d(params) · upstream` into `grad`, where `upstream`
/// is the gradient with respect to the network output.
fn backward(def: &MlpDef, params: &[f64], trace: &Trace, upstream: Vec<f64>, grad: &mut [f64]) {
    let n_layers = def.n_layers();
    let mut delta = upstream;
    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (def.layer_widths[l], def.layer_widths[l + 1]);
        let offset = def.layer_offset(l);
        let input = &trace.post[l];
        let nz = nonzero(input);
        for o in 0..n_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[offset + o * n_in..offset + (o + 1) * n_in];
            match &nz {
                Some(idx) => idx.iter().for_each(|&i| row[i] += d * input[i]),
                None => row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a),
            }
            grad[offset + n_in * n_out + o] += d;
        }
        if l == 0 {
            break;
        }
        let weights = &params[offset..offset + n_in * n_out];
        let mut prev = vec![0.0; n_in];
        for o in 0..n_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                *p += w * d;
            }
        }
        for (p, &z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
            *p *= def.activation.derivative(z);
        }
        delta = prev;
    }
}

fn check_features(def: &MlpDef, x: &[f64]) -> Result<()> {
    if x.len() != def.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: def.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// q-values for one state. The returned tensor is freshly allocated.
pub fn forward(def: &MlpDef, params: &FlatParams, state_features: &Tensor) -> Result<Tensor> {
    params.check(def)?;
    check_features(def, state_features.as_slice())?;
    let mut trace = forward_trace(def, params.as_slice(), state_features.as_slice());
    Tensor::vector(trace.post.pop().unwrap())
}

pub(crate) fn forward_slice(def: &MlpDef, params: &[f64], x: &[f64]) -> Vec<f64> {
    forward_trace(def, params, x).post.pop().unwrap()
}

/// Lowest index among the maximal entries.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One frozen regression sample: fit `q(features, action)` to `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample<'a> {
    pub features: &'a [f64],
    pub action: usize,
    pub target: f64,
    pub weight: f64,
}

/// Loss `½ Σ weight·(target − q(s,a;w))²` and its gradient with respect to
/// `w`. Targets are plain numbers here, so nothing flows into them.
pub fn regression_loss_grad(
    def: &MlpDef,
    w: &FlatParams,
    samples: &[RegressionSample<'_>],
) -> Result<(f64, Tensor)> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    w.check(def)?;
    let params = w.as_slice();
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for sample in samples {
        check_features(def, sample.features)?;
        check_action(def, sample.action)?;
        let trace = forward_trace(def, params, sample.features);
        let q = trace.post.last().unwrap()[sample.action];
        let diff = q - sample.target;
        loss += 0.5 * sample.weight * diff * diff;
        let mut upstream = vec![0.0; def.output_dim()];
        upstream[sample.action] = sample.weight * diff;
        backward(def, params, &trace, upstream, &mut grad);
    }
    Ok((loss, Tensor::vector(grad)?))
}

fn check_action(def: &MlpDef, action: usize) -> Result<()> {
    if action >= def.output_dim() {
        return Err(Error::invalid(format!(
            "action {action} out of range for {} outputs",
            def.output_dim()
        )));
    }
    Ok(())
}

/// Bootstrapped regression targets for a batch, computed from `theta` only.
pub fn td_targets(
    def: &MlpDef,
    theta: &FlatParams,
    batch: &[Transition],
    gamma: f64,
) -> Result<Vec<f64>> {
    theta.check(def)?;
    batch
        .iter()
        .map(|tr| crate::rl::bellman_target(def, theta, tr, gamma))
        .collect()
}

/// The temporal-difference loss `½ Σ (r + γ max_a' q(s',a';θ) − q(s,a;w))²`
/// over `batch` (each term scaled by the transition weight) and its
/// semi-gradient with respect to `w`.
pub fn grad_td_loss(
    def: &MlpDef,
    w: &FlatParams,
    theta: &FlatParams,
    batch: &[Transition],
    gamma: f64,
) -> Result<(f64, Tensor)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let targets = td_targets(def, theta, batch, gamma)?;
    let samples: Vec<RegressionSample<'_>> = batch
        .iter()
        .zip(&targets)
        .map(|(tr, &target)| RegressionSample {
            features: tr.s.as_slice(),
            action: tr.a,
            target,
            weight: tr.weight,
        })
        .collect();
    regression_loss_grad(def, w, &samples)
}

/// Loss value only; see [`grad_td_loss`].
pub fn td_loss(
    def: &MlpDef,
    w: &FlatParams,
    theta: &FlatParams,
    batch: &[Transition],
    gamma: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    w.check(def)?;
    let mut loss = 0.0;
    for tr in batch {
        check_features(def, tr.s.as_slice())?;
        check_action(def, tr.a)?;
        let target = crate::rl::bellman_target(def, theta, tr, gamma)?;
        let q = forward_slice(def, w.as_slice(), tr.s.as_slice())[tr.a];
        loss += 0.5 * tr.weight * (target - q) * (target - q);
    }
    Ok(loss)
}

/// Central-difference gradient of [`td_loss`] in `w`, one coordinate at a
/// time.
pub fn finite_diff_grad(
    def: &MlpDef,
    w: &FlatParams,
    theta: &FlatParams,
    batch: &[Transition],
    gamma: f64,
    h: f64,
) -> Result<Tensor> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = w.clone();
    let mut grad = Vec::with_capacity(w.len());
    for j in 0..w.len() {
        let orig = probe.as_slice()[j];
        probe.as_mut_slice()[j] = orig + h;
        let up = td_loss(def, &probe, theta, batch, gamma)?;
        probe.as_mut_slice()[j] = orig - h;
        let down = td_loss(def, &probe, theta, batch, gamma)?;
        probe.as_mut_slice()[j] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Tensor::vector(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transition(s: Vec<f64>, a: usize, r: f64, s_next: Vec<f64>, terminal: bool) -> Transition {
        Transition::new(
            Tensor::vector(s).unwrap(),
            a,
            r,
            Tensor::vector(s_next).unwrap(),
            terminal,
        )
    }

    #[test]
    fn param_count_matches_layout() {
        let def = MlpDef::new(vec![4, 8, 3], Activation::Relu, 0).unwrap();
        assert_eq!(def.param_count(), 4 * 8 + 8 + 8 * 3 + 3);
        assert_eq!(def.param_count(), 67);
        assert_eq!(def.layer_offset(0), 0);
        assert_eq!(def.layer_offset(1), 40);
    }

    #[test]
    fn init_zero_biases_and_deterministic() {
        let def = MlpDef::new(vec![2, 1], Activation::Relu, 17).unwrap();
        let p = init_params(&def).unwrap();
        assert_eq!(p.as_slice()[2], 0.0);
        assert_eq!(p, init_params(&def).unwrap());

        let def = MlpDef::new(vec![4, 8, 3], Activation::Tanh, 5).unwrap();
        let p = init_params(&def).unwrap();
        assert_eq!(p.len(), 67);
        assert!(p.as_slice()[32..40].iter().all(|&b| b == 0.0));
        assert!(p.as_slice()[64..67].iter().all(|&b| b == 0.0));
        let bound = (6.0f64 / 12.0).sqrt();
        assert!(p.as_slice()[..32].iter().all(|w| w.abs() <= bound));
        assert!(p.as_slice()[..32].iter().any(|&w| w != 0.0));
    }

    #[test]
    fn zero_params_give_zero_q() {
        let def = MlpDef::new(vec![3, 5, 2], Activation::Relu, 0).unwrap();
        let p = FlatParams::zeros(&def).unwrap();
        let q = forward(&def, &p, &Tensor::vector(vec![1.0, -4.0, 9.0]).unwrap()).unwrap();
        assert_eq!(q.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn affine_single_layer() {
        let def = MlpDef::new(vec![1, 1], Activation::Relu, 0).unwrap();
        let p = FlatParams::from_vec(&def, vec![2.0, 1.0]).unwrap();
        let q = forward(&def, &p, &Tensor::vector(vec![3.0]).unwrap()).unwrap();
        assert_eq!(q.as_slice(), &[7.0]);
    }

    #[test]
    fn forward_shape_and_finite() {
        let def = MlpDef::new(vec![2, 4, 3], Activation::Tanh, 9).unwrap();
        let p = init_params(&def).unwrap();
        let q = forward(&def, &p, &Tensor::vector(vec![0.3, -1.2]).unwrap()).unwrap();
        assert_eq!(q.shape(), &[3]);
        assert!(q.is_finite());
    }

    #[test]
    fn forward_output_does_not_alias_params() {
        let def = MlpDef::new(vec![1, 1], Activation::Relu, 0).unwrap();
        let p = FlatParams::from_vec(&def, vec![2.0, 1.0]).unwrap();
        let before = p.clone();
        let mut q = forward(&def, &p, &Tensor::vector(vec![3.0]).unwrap()).unwrap();
        q.as_mut_slice()[0] = -100.0;
        assert_eq!(p, before);
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let def = MlpDef::new(vec![2, 3], Activation::Relu, 0).unwrap();
        let p = FlatParams::zeros(&def).unwrap();
        assert!(matches!(
            forward(&def, &p, &Tensor::vector(vec![1.0; 3]).unwrap()),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn zero_network_loss_is_half_r_squared() {
        let def = MlpDef::new(vec![2, 3, 2], Activation::Relu, 0).unwrap();
        let zero = FlatParams::zeros(&def).unwrap();
        let batch = vec![transition(vec![1.0, 0.0], 1, 1.0, vec![0.0, 1.0], false)];
        let (loss, grad) = grad_td_loss(&def, &zero, &zero, &batch, 0.9).unwrap();
        assert_eq!(loss, 0.5);
        assert_eq!(grad.len(), def.param_count());
    }

    #[test]
    fn empty_batch_rejected() {
        let def = MlpDef::new(vec![2, 2], Activation::Relu, 0).unwrap();
        let zero = FlatParams::zeros(&def).unwrap();
        assert!(matches!(
            grad_td_loss(&def, &zero, &zero, &[], 0.9),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn tabular_gradient_is_negative_td_error_on_one_hot_slot() {
        // 3 states one-hot, 2 actions, linear net: q(s,a) = W[a][s] + b[a].
        let def = MlpDef::new(vec![3, 2], Activation::Relu, 0).unwrap();
        let w =
            FlatParams::from_vec(&def, vec![0.5, -1.0, 2.0, 0.25, 3.0, -0.5, 0.1, 0.2]).unwrap();
        let theta =
            FlatParams::from_vec(&def, vec![1.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0]).unwrap();
        // s = 2, a = 1, s' = 1, r = 0.5, gamma = 0.5.
        let batch = vec![transition(
            vec![0.0, 0.0, 1.0],
            1,
            0.5,
            vec![0.0, 1.0, 0.0],
            false,
        )];
        // target = 0.5 + 0.5 * max(0.0 + 0.0, 4.0 + 0.0) = 2.5
        // q(s=2,a=1;w) = W[1][2] + b[1] = -0.5 + 0.2 = -0.3; td_error = 2.8
        let (loss, grad) = grad_td_loss(&def, &w, &theta, &batch, 0.5).unwrap();
        let td_error: f64 = 2.8;
        assert!((loss - 0.5 * td_error * td_error).abs() < 1e-12);
        let mut expected = vec![0.0; 8];
        expected[3 + 2] = -td_error;
        expected[6 + 1] = -td_error;
        for (g, e) in grad.as_slice().iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{:?}", grad.as_slice());
        }
    }

    #[test]
    fn terminal_transition_ignores_successor() {
        let def = MlpDef::new(vec![1, 1], Activation::Relu, 0).unwrap();
        let theta = FlatParams::from_vec(&def, vec![10.0, 0.0]).unwrap();
        let w = FlatParams::zeros(&def).unwrap();
        let batch = vec![transition(vec![0.0], 0, 2.0, vec![1.0], true)];
        let (loss, _) = grad_td_loss(&def, &w, &theta, &batch, 0.9).unwrap();
        assert_eq!(loss, 2.0);
    }

    #[test]
    fn finite_diff_exact_on_quadratic_weight() {
        // Loss is quadratic in the single weight, so central differences are
        // exact up to rounding.
        let def = MlpDef::new(vec![1, 1], Activation::Relu, 0).unwrap();
        let w = FlatParams::from_vec(&def, vec![0.7, -0.2]).unwrap();
        let theta = FlatParams::zeros(&def).unwrap();
        let batch = vec![transition(vec![2.0], 0, 1.0, vec![1.0], false)];
        let fd = finite_diff_grad(&def, &w, &theta, &batch, 0.9, 1e-3).unwrap();
        // q = 1.4 - 0.2 = 1.2, target = 1.0, d/dW = (q - t) * x = 0.4, d/db = 0.2
        assert!((fd.as_slice()[0] - 0.4).abs() < 1e-10);
        assert!((fd.as_slice()[1] - 0.2).abs() < 1e-10);
    }

    #[test]
    fn finite_diff_rejects_nonpositive_step() {
        let def = MlpDef::new(vec![1, 1], Activation::Relu, 0).unwrap();
        let w = FlatParams::zeros(&def).unwrap();
        let batch = vec![transition(vec![2.0], 0, 1.0, vec![1.0], false)];
        assert!(finite_diff_grad(&def, &w, &w, &batch, 0.9, 0.0).is_err());
    }

    #[test]
    fn checkpoint_block_round_trips() {
        let def = MlpDef::new(vec![3, 4, 2], Activation::Tanh, 2).unwrap();
        let p = init_params(&def).unwrap();
        let mut bytes = Vec::new();
        p.write_to(&def.layer_widths, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 * (1 + 3 + def.param_count()));
        assert_eq!(&bytes[..8], &3u64.to_le_bytes());
        let (widths, back) = FlatParams::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(widths, def.layer_widths);
        assert_eq!(back, p);
        assert!(FlatParams::read_from(&mut &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
