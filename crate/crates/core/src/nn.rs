//! MLP machinery: Xavier-initialized layers, tanh/identity activations,
//! hand-rolled backprop over flattened parameter vectors, a diagonal-Gaussian
//! policy head with a state-independent learned log-std, and Adam.
//!
//! Gradients are produced in the same flat layout as [`MlpParams::flatten`]
//! (per layer: row-major weights then bias), which is also the checkpoint
//! layout, so the optimizer and serialization never disagree about ordering.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

/// Lower clamp for the policy log-std.
pub const LOG_STD_MIN: f64 = -5.0;
/// Upper clamp for the policy log-std.
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed in terms of the activation *output* `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Draw an `n_out × n_in` weight matrix with entries `N(0, 2/(n_in+n_out))`.
pub fn xavier_init(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Result<Matrix> {
    if n_in == 0 || n_out == 0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "xavier_init: zero dimension (n_in={n_in}, n_out={n_out})"
        )));
    }
    let std = math::sqrt(2.0 / (n_in + n_out) as f64);
    Ok(Matrix::from_fn(n_out, n_in, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * std
    }))
}

/// One dense layer: `y = act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl LayerParams {
    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// Multi-layer perceptron. The last layer's activation is the output
/// activation (identity for both the policy mean and the critic).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpParams {
    layers: Vec<LayerParams>,
}

/// Per-layer post-activation values from one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    post: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Build an MLP with the given layer sizes (`sizes[0]` = input dim),
    /// Xavier-initialized weights and zero biases. All hidden layers use
    /// `hidden`, the final layer uses `output`.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidConfig(alloc::format!(
                "mlp needs at least input and output sizes, got {}",
                sizes.len()
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("mlp layer size of zero".into()));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let last = layers.len() == sizes.len() - 2;
            layers.push(LayerParams {
                weights: xavier_init(n_in, n_out, rng)?,
                bias: vec![0.0; n_out],
                activation: if last { output } else { hidden },
            });
        }
        Ok(MlpParams { layers })
    }

    /// Assemble from explicit layers (used by checkpoint loading).
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("mlp with no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape {
                    what: "mlp layer chaining",
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape {
                    what: "mlp bias",
                    expected: layer.out_dim(),
                    got: layer.bias.len(),
                });
            }
        }
        Ok(MlpParams { layers })
    }

    /// Deep consistency check for parameters read from external sources:
    /// matrix shapes, bias lengths, layer chaining, and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("mlp with no layers".into()));
        }
        for layer in &self.layers {
            layer.weights.validate()?;
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape {
                    what: "mlp bias",
                    expected: layer.out_dim(),
                    got: layer.bias.len(),
                });
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape {
                    what: "mlp layer chaining",
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        if !self.is_finite() {
            return Err(Error::InvalidConfig("non-finite network parameters".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Structurally disconnect the given input slots: zero the first-layer
    /// weight column of each, so the network's output (and gradient) is
    /// exactly independent of those inputs until the columns are retrained.
    pub fn zero_input_columns(&mut self, cols: &[usize]) -> Result<()> {
        let in_dim = self.in_dim();
        let first = &mut self.layers[0];
        for &c in cols {
            if c >= in_dim {
                return Err(Error::Shape {
                    what: "input column",
                    expected: in_dim,
                    got: c,
                });
            }
            for r in 0..first.out_dim() {
                first.weights.set(r, c, 0.0);
            }
        }
        Ok(())
    }

    /// `[in, hidden.., out]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.layers.len() + 1);
        sizes.push(self.in_dim());
        for layer in &self.layers {
            sizes.push(layer.out_dim());
        }
        sizes
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    /// Forward pass returning the output and the cache needed for backprop.
    /// The pass is pure: identical `(params, input)` give identical output.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.in_dim() {
            return Err(Error::Shape {
                what: "mlp input",
                expected: self.in_dim(),
                got: input.len(),
            });
        }
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.mul_vec(&cur);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            for zi in z.iter_mut() {
                *zi = layer.activation.apply(*zi);
            }
            post.push(z.clone());
            cur = z;
        }
        Ok((
            cur,
            ForwardCache {
                input: input.to_vec(),
                post,
            },
        ))
    }

    /// Forward pass without keeping a cache (rollout/eval path).
    pub fn output(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.post.len() != self.layers.len() {
            return Err(Error::Shape {
                what: "forward cache layers",
                expected: self.layers.len(),
                got: cache.post.len(),
            });
        }
        if cache.input.len() != self.in_dim() {
            return Err(Error::Shape {
                what: "forward cache input",
                expected: self.in_dim(),
                got: cache.input.len(),
            });
        }
        for (layer, post) in self.layers.iter().zip(&cache.post) {
            if post.len() != layer.out_dim() {
                return Err(Error::Shape {
                    what: "forward cache activations",
                    expected: layer.out_dim(),
                    got: post.len(),
                });
            }
        }
        Ok(())
    }

    /// Backprop `grad_output` (∂L/∂output) through the cached pass and add
    /// `scale ·` the parameter gradient into `acc`, which must have
    /// [`param_count`](Self::param_count) elements laid out like
    /// [`flatten`](Self::flatten).
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        acc: &mut [f64],
        scale: f64,
    ) -> Result<()> {
        self.check_cache(cache)?;
        if grad_output.len() != self.out_dim() {
            return Err(Error::Shape {
                what: "grad_output",
                expected: self.out_dim(),
                got: grad_output.len(),
            });
        }
        if acc.len() != self.param_count() {
            return Err(Error::Shape {
                what: "gradient accumulator",
                expected: self.param_count(),
                got: acc.len(),
            });
        }
        // Offsets of each layer's weight block in the flat layout.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }

        let mut grad_y = grad_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let y = &cache.post[l];
            let x = if l == 0 {
                &cache.input
            } else {
                &cache.post[l - 1]
            };
            // ∂L/∂z = ∂L/∂y ⊙ act'(y)
            let gpre: Vec<f64> = grad_y
                .iter()
                .zip(y)
                .map(|(g, yi)| g * layer.activation.derivative_from_output(*yi))
                .collect();
            let (n_out, n_in) = (layer.out_dim(), layer.in_dim());
            let w_off = offsets[l];
            let b_off = w_off + n_out * n_in;
            for r in 0..n_out {
                let gr = gpre[r] * scale;
                if gr != 0.0 {
                    let block = &mut acc[w_off + r * n_in..w_off + (r + 1) * n_in];
                    for (slot, xi) in block.iter_mut().zip(x.iter()) {
                        *slot += gr * xi;
                    }
                }
                acc[b_off + r] += gr;
            }
            if l > 0 {
                grad_y = layer.weights.tr_mul_vec(&gpre);
            }
        }
        Ok(())
    }

    /// Backprop returning a fresh flat gradient vector.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.param_count()];
        self.backward_into(cache, grad_output, &mut acc, 1.0)?;
        Ok(acc)
    }

    /// Gradient of `grad_output · output` with respect to the network input,
    /// parameters held fixed.
    pub fn input_gradient(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        if grad_output.len() != self.out_dim() {
            return Err(Error::Shape {
                what: "grad_output",
                expected: self.out_dim(),
                got: grad_output.len(),
            });
        }
        let mut grad_y = grad_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let gpre: Vec<f64> = grad_y
                .iter()
                .zip(&cache.post[l])
                .map(|(g, yi)| g * layer.activation.derivative_from_output(*yi))
                .collect();
            grad_y = layer.weights.tr_mul_vec(&gpre);
        }
        Ok(grad_y)
    }

    /// Jacobian of the network at `input`: row k is ∂output_k/∂input.
    pub fn input_jacobian(&self, input: &[f64]) -> Result<Matrix> {
        let (_, cache) = self.forward(input)?;
        let mut rows = Vec::with_capacity(self.out_dim() * self.in_dim());
        for k in 0..self.out_dim() {
            let mut basis = vec![0.0; self.out_dim()];
            basis[k] = 1.0;
            rows.extend_from_slice(&self.input_gradient(&cache, &basis)?);
        }
        Matrix::from_vec(self.out_dim(), self.in_dim(), rows)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Flatten all parameters: per layer, row-major weights then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Load parameters from a flat vector laid out like [`flatten`](Self::flatten).
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape {
                what: "flat parameters",
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let w_len = layer.weights.rows() * layer.weights.cols();
            layer
                .weights
                .as_mut_slice()
                .copy_from_slice(&flat[off..off + w_len]);
            off += w_len;
            let b_len = layer.bias.len();
            layer.bias.copy_from_slice(&flat[off..off + b_len]);
            off += b_len;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

/// Diagonal-Gaussian log-density of `action` under `N(mean, exp(log_std)²)`.
pub fn gaussian_logprob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    debug_assert_eq!(mean.len(), log_std.len());
    debug_assert_eq!(mean.len(), action.len());
    let mut logp = 0.0;
    for k in 0..mean.len() {
        let sigma = math::exp(log_std[k]);
        let z = (action[k] - mean[k]) / sigma;
        logp += -0.5 * z * z - log_std[k] - 0.5 * math::LN_2PI;
    }
    logp
}

/// Entropy of the diagonal Gaussian (state-independent for a fixed log-std).
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std
        .iter()
        .map(|ls| ls + 0.5 * (1.0 + math::LN_2PI))
        .sum()
}

/// One sampled action plus the statistics the PPO buffer needs.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub action: Vec<f64>,
    pub logp: f64,
    pub mean: Vec<f64>,
}

/// Gaussian policy: an MLP mean head plus a learned, state-independent
/// log-std vector clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianPolicyHead {
    pub mean_net: MlpParams,
    pub log_std: Vec<f64>,
}

impl GaussianPolicyHead {
    pub fn new(sizes: &[usize], init_log_std: f64, rng: &mut impl Rng) -> Result<Self> {
        let mean_net = MlpParams::new(sizes, Activation::Tanh, Activation::Identity, rng)?;
        let act_dim = mean_net.out_dim();
        let mut head = GaussianPolicyHead {
            mean_net,
            log_std: vec![init_log_std; act_dim],
        };
        head.clamp_log_std();
        Ok(head)
    }

    /// Deep consistency check for parameters read from external sources.
    pub fn validate(&self) -> Result<()> {
        self.mean_net.validate()?;
        if self.log_std.len() != self.mean_net.out_dim() {
            return Err(Error::Shape {
                what: "policy log_std",
                expected: self.mean_net.out_dim(),
                got: self.log_std.len(),
            });
        }
        if self.log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite log_std".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn obs_dim(&self) -> usize {
        self.mean_net.in_dim()
    }

    #[inline]
    pub fn act_dim(&self) -> usize {
        self.mean_net.out_dim()
    }

    /// Deterministic mean action (eval path).
    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.output(obs)
    }

    /// Sample `a = μ + σ ε` and report `logp` via [`gaussian_logprob`] on the
    /// same values, so stored log-probs always match later re-evaluation.
    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> Result<PolicySample> {
        let mean = self.mean(obs)?;
        let mut action = Vec::with_capacity(mean.len());
        for k in 0..mean.len() {
            let eps: f64 = rng.sample(StandardNormal);
            action.push(mean[k] + math::exp(self.log_std[k]) * eps);
        }
        let logp = gaussian_logprob(&mean, &self.log_std, &action);
        Ok(PolicySample { action, logp, mean })
    }

    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Mean-net parameters followed by log-std.
    pub fn param_count(&self) -> usize {
        self.mean_net.param_count() + self.log_std.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = self.mean_net.flatten();
        flat.extend_from_slice(&self.log_std);
        flat
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape {
                what: "policy flat parameters",
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let split = self.mean_net.param_count();
        self.mean_net.load_flat(&flat[..split])?;
        self.log_std.copy_from_slice(&flat[split..]);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.mean_net.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment state over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One Adam update in place. Rejects non-finite gradients before touching
    /// any state, so a poisoned batch cannot corrupt the parameters.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Shape {
                what: "adam params",
                expected: self.m.len(),
                got: params.len(),
            });
        }
        if grads.len() != params.len() {
            return Err(Error::Shape {
                what: "adam grads",
                expected: params.len(),
                got: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { what: "gradient" });
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - math::powi(beta1, self.t as i32);
        let bc2 = 1.0 - math::powi(beta2, self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
        Ok(())
    }
}

/// Central-difference gradient of `loss` at `params` with step `h`.
///
/// Verification utility shared by the module tests and the acceptance gate:
/// analytic gradients in this crate are accepted only when they match this
/// estimate to a small relative error.
pub fn finite_difference_grad(
    params: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    h: f64,
) -> Vec<f64> {
    let mut scratch = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = scratch[i];
        scratch[i] = orig + h;
        let up = loss(&scratch);
        scratch[i] = orig - h;
        let down = loss(&scratch);
        scratch[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Relative error between a numerical and an analytic value, guarded against
/// tiny denominators.
pub fn relative_error(a: f64, b: f64) -> f64 {
    math::abs(a - b) / math::abs(a).max(math::abs(b)).max(1e-8)
}
