//! Minimal fully-connected network with manual backpropagation. Hidden
//! layers use the rectifier; the scalar head chooses between a raw linear
//! output and two non-negative maps used by the regret networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Output transform of the scalar head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    /// Raw pre-activation.
    Linear,
    /// `softplus(z)`: strictly positive with gradient everywhere. A freshly
    /// zero-initialized final layer outputs the constant `ln 2`, which regret
    /// matching turns into the uniform strategy.
    Softplus,
    /// `max(softplus(z) - ln 2, 0)`: non-negative and exactly zero for a
    /// freshly zero-initialized final layer.
    ZeroedSoftplus,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl OutputHead {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            OutputHead::Linear => z,
            OutputHead::Softplus => softplus(z),
            OutputHead::ZeroedSoftplus => (softplus(z) - std::f64::consts::LN_2).max(0.0),
        }
    }

    /// Derivative at `z`; the zeroed head takes the right-hand derivative at
    /// its kink so a zero-initialized net is not stuck.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            OutputHead::Linear => 1.0,
            OutputHead::Softplus => sigmoid(z),
            OutputHead::ZeroedSoftplus => {
                if z >= 0.0 {
                    sigmoid(z)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Architecture and initialization of a [`Network`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head: OutputHead,
    pub seed: u64,
}

impl NetSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, head: OutputHead, seed: u64) -> Self {
        assert!(input_dim >= 1);
        assert!(hidden.iter().all(|&w| w >= 1));
        NetSpec {
            input_dim,
            hidden,
            head,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Layer {
    /// Row-major `out x in` weights.
    weights: Vec<f64>,
    biases: Vec<f64>,
    inputs: usize,
    outputs: usize,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut z = self.biases[o];
            for (w, v) in row.iter().zip(x) {
                z += w * v;
            }
            out.push(z);
        }
    }
}

/// Feed-forward network with rectifier hidden layers and a scalar head.
/// All state needed to reproduce it lives in the spec plus the parameters,
/// and initialization is deterministic in the spec seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    spec: NetSpec,
    layers: Vec<Layer>,
}

impl Network {
    /// He-style initialization for hidden layers; the final layer starts at
    /// zero so the initial output is `head(0)` for every input.
    pub fn new(spec: NetSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut widths = vec![spec.input_dim];
        widths.extend_from_slice(&spec.hidden);
        widths.push(1);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for i in 0..widths.len() - 1 {
            let (inputs, outputs) = (widths[i], widths[i + 1]);
            let last = i == widths.len() - 2;
            let scale = (2.0 / inputs as f64).sqrt();
            let weights = (0..inputs * outputs)
                .map(|_| {
                    if last {
                        0.0
                    } else {
                        // Box-Muller sample keeps us independent of rand_distr.
                        let u1: f64 = rng.gen_range(1e-12..1.0);
                        let u2: f64 = rng.gen::<f64>();
                        scale
                            * (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos()
                    }
                })
                .collect();
            layers.push(Layer {
                weights,
                biases: vec![0.0; outputs],
                inputs,
                outputs,
            });
        }
        Network { spec, layers }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    /// Head output for an input vector. Reuses a thread-local cache, so the
    /// hot path is allocation-free after warmup.
    pub fn forward(&self, x: &[f64]) -> f64 {
        thread_local! {
            static SCRATCH: std::cell::RefCell<ForwardCache> =
                std::cell::RefCell::new(ForwardCache::default());
        }
        SCRATCH.with(|cache| self.forward_cached(x, &mut cache.borrow_mut()))
    }

    /// Forward pass that retains activations for [`Network::backward`].
    /// The cache's buffers are reused across calls.
    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> f64 {
        assert_eq!(x.len(), self.spec.input_dim, "input width mismatch");
        let slots = self.layers.len() + 1;
        cache.activations.resize_with(slots, Vec::new);
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.activations.split_at_mut(i + 1);
            layer.forward(&done[i], &mut rest[0]);
            if i != self.layers.len() - 1 {
                for z in rest[0].iter_mut() {
                    *z = z.max(0.0);
                }
            }
        }
        cache.output_z = cache.activations[slots - 1][0];
        self.spec.head.apply(cache.output_z)
    }

    /// Accumulates `dL/dparams` into `grads` given `dL/dy` at the head
    /// output, using the activations cached by the matching forward pass.
    pub fn backward(&self, cache: &ForwardCache, upstream: f64, grads: &mut Gradients) {
        let mut delta = vec![upstream * self.spec.head.derivative(cache.output_z)];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let inputs = &cache.activations[l];
            let grad_layer = &mut grads.layers[l];
            let mut next_delta = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                grad_layer.biases[o] += d;
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let grow = &mut grad_layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for i in 0..layer.inputs {
                    grow[i] += d * inputs[i];
                    next_delta[i] += d * row[i];
                }
            }
            if l > 0 {
                // rectifier gate: activation zero means the unit was clamped
                for (nd, &a) in next_delta.iter_mut().zip(&cache.activations[l]) {
                    if a <= 0.0 {
                        *nd = 0.0;
                    }
                }
            }
            delta = next_delta;
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn get_param(&self, index: usize) -> f64 {
        let (l, off) = self.locate(index);
        let layer = &self.layers[l];
        if off < layer.weights.len() {
            layer.weights[off]
        } else {
            layer.biases[off - layer.weights.len()]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, off) = self.locate(index);
        let layer = &mut self.layers[l];
        if off < layer.weights.len() {
            layer.weights[off] = value;
        } else {
            layer.biases[off - layer.weights.len()] = value;
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let size = layer.weights.len() + layer.biases.len();
            if index < size {
                return (l, index);
            }
            index -= size;
        }
        panic!("parameter index out of range");
    }

    /// All parameters flattened: per layer, weights then biases.
    pub fn export_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// Restores parameters written by [`Network::export_params`].
    pub fn import_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = layer.biases.len();
            layer.biases.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
    }

    /// Applies `p -= lr * v` after the momentum update `v = mu*v + g`.
    pub fn sgd_step(&mut self, grads: &Gradients, velocity: &mut Gradients, lr: f64, momentum: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            let v = &mut velocity.layers[l];
            for i in 0..layer.weights.len() {
                v.weights[i] = momentum * v.weights[i] + g.weights[i];
                layer.weights[i] -= lr * v.weights[i];
            }
            for i in 0..layer.biases.len() {
                v.biases[i] = momentum * v.biases[i] + g.biases[i];
                layer.biases[i] -= lr * v.biases[i];
            }
        }
    }

    /// Zeroed gradient buffers shaped like this network.
    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }
}

/// Activations retained by a forward pass.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
    output_z: f64,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradient (or velocity) buffers matching a [`Network`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for w in &mut l.weights {
                *w *= factor;
            }
            for b in &mut l.biases {
                *b *= factor;
            }
        }
    }

    pub fn get(&self, mut index: usize) -> f64 {
        for l in &self.layers {
            let size = l.weights.len() + l.biases.len();
            if index < size {
                return if index < l.weights.len() {
                    l.weights[index]
                } else {
                    l.biases[index - l.weights.len()]
                };
            }
            index -= size;
        }
        panic!("gradient index out of range");
    }
}
