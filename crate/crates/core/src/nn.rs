//! Small dense networks with hand-written reverse-mode gradients.
//!
//! Everything is `f64` so analytic gradients can be checked against central
//! differences. Weights are stored row-major as `[out × in]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("layer {layer} expects {expected} inputs but the previous layer yields {found}")]
    Shape { layer: usize, expected: usize, found: usize },
    #[error("gradients do not match the network's parameter shapes")]
    GradientShape,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Dense { inputs, outputs, activation, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
    /// Seed the parameters were initialised from.
    pub seed: u64,
}

/// Per-layer inputs and pre-activations recorded by [`DenseNet::forward`].
#[derive(Debug, Clone)]
pub struct Cache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.biases.len()] })
                .collect(),
        }
    }

    /// `self += k · other`.
    pub fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += k * y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += k * y);
        }
    }

    /// All entries in layer order, weights before biases.
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn congruent(&self, net: &DenseNet) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len())
    }
}

impl DenseNet {
    /// Builds `sizes[0] -> sizes[1] -> ... -> sizes[last]` with relu hidden
    /// layers and an identity output. Relu layers use He-uniform weights,
    /// the output layer Glorot-uniform; biases start at zero.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output width");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let (activation, limit) = if i == last {
                    (Activation::Identity, (6.0 / (fan_in + fan_out) as f64).sqrt())
                } else {
                    (Activation::Relu, (6.0 / fan_in as f64).sqrt())
                };
                let mut layer = Dense::zeros(fan_in, fan_out, activation);
                for w in &mut layer.weights {
                    *w = rng.gen_range(-limit..limit);
                }
                layer
            })
            .collect();
        DenseNet { layers, seed }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NnError> {
        let net = DenseNet { layers, seed: 0 };
        net.check_shapes()?;
        Ok(net)
    }

    fn check_shapes(&self) -> Result<(), NnError> {
        if self.layers.is_empty() {
            return Err(NnError::Checkpoint("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(NnError::Shape { layer: i, expected: l.inputs * l.outputs, found: l.weights.len() });
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(NnError::Shape { layer: i, expected: l.inputs, found: self.layers[i - 1].outputs });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flat parameter access in the same order as [`Gradients::flat`].
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.biases.len() {
                return &mut l.biases[index];
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Cache), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Dimension { expected: self.input_dim(), found: x.len() });
        }
        let mut cache =
            Cache { inputs: Vec::with_capacity(self.layers.len()), pre: Vec::with_capacity(self.layers.len()) };
        let mut a = x.to_vec();
        for l in &self.layers {
            let z = l.affine(&a);
            let out = match l.activation {
                Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => z.clone(),
            };
            cache.inputs.push(a);
            cache.pre.push(z);
            a = out;
        }
        Ok((a, cache))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Gradient of the scalar objective whose derivative with respect to the
    /// network output is `grad_out`.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64]) -> Result<Gradients, NnError> {
        self.backprop(cache, grad_out, true).map(|(g, _)| g.expect("requested"))
    }

    /// Same objective as [`DenseNet::backward`], differentiated with respect
    /// to the network input instead of the parameters.
    pub fn input_gradient(&self, cache: &Cache, grad_out: &[f64]) -> Result<Vec<f64>, NnError> {
        self.backprop(cache, grad_out, false).map(|(_, dx)| dx)
    }

    fn backprop(
        &self,
        cache: &Cache,
        grad_out: &[f64],
        params: bool,
    ) -> Result<(Option<Gradients>, Vec<f64>), NnError> {
        if grad_out.len() != self.output_dim() {
            return Err(NnError::Dimension { expected: self.output_dim(), found: grad_out.len() });
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(NnError::Dimension { expected: self.layers.len(), found: cache.inputs.len() });
        }
        let mut grads = params.then(|| Gradients::zeros_like(self));
        let mut delta = grad_out.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            if l.activation == Activation::Relu {
                for (d, z) in delta.iter_mut().zip(&cache.pre[i]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &cache.inputs[i];
            if let Some(g) = grads.as_mut() {
                let lg = &mut g.layers[i];
                for (o, &d) in delta.iter().enumerate() {
                    lg.biases[o] = d;
                    if d != 0.0 {
                        let row = &mut lg.weights[o * l.inputs..(o + 1) * l.inputs];
                        row.iter_mut().zip(x).for_each(|(w, v)| *w = d * v);
                    }
                }
            }
            let mut prev = vec![0.0; l.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint { version: CHECKPOINT_VERSION, net: self.clone() }).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", cp.version)));
        }
        cp.net.check_shapes()?;
        Ok(cp.net)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    #[serde(flatten)]
    net: DenseNet,
}

/// Temperature softmax with max-shift: `p_i ∝ exp(l_i/τ − max_j l_j/τ)`.
pub fn softmax_temperature(logits: &[f64], tau: f64) -> Vec<f64> {
    assert!(tau > 0.0, "temperature must be positive");
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `ln softmax_temperature(logits, tau)[i]`, computed without underflow.
pub fn log_softmax_temperature(logits: &[f64], tau: f64, i: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits.iter().map(|l| ((l - max) / tau).exp()).sum::<f64>().ln();
    (logits[i] - max) / tau - lse
}

pub fn sgd_step(net: &mut DenseNet, grads: &Gradients, lr: f64) -> Result<(), NnError> {
    if !grads.congruent(net) {
        return Err(NnError::GradientShape);
    }
    for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
        l.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= lr * d);
        l.biases.iter_mut().zip(&g.biases).for_each(|(b, d)| *b -= lr * d);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl AdamState {
    pub fn new(net: &DenseNet) -> Self {
        AdamState { m: Gradients::zeros_like(net), v: Gradients::zeros_like(net), t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }
}

pub fn adam_step(
    net: &mut DenseNet,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    if !grads.congruent(net) || !state.m.congruent(net) {
        return Err(NnError::GradientShape);
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t);
    let c2 = 1.0 - cfg.beta2.powi(state.t);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    };
    for (((l, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut state.m.layers).zip(&mut state.v.layers) {
        update(&mut l.weights, &g.weights, &mut m.weights, &mut v.weights);
        update(&mut l.biases, &g.biases, &mut m.biases, &mut v.biases);
    }
    Ok(())
}
