//! Minimal dense feed-forward network with exact reverse-mode gradients.
//!
//! Every model in this crate is assembled from [`FeedForwardNet`]: a stack of
//! affine layers with a configurable hidden activation and a linear output
//! layer. Parameters are `f64` throughout; initialization is a pure function
//! of the config seed, so two nets built from equal configs are bit-identical.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer activation. The output layer is always linear so logits can
/// range over all reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation `z`.
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

/// Network layout: layer widths (input first, output last), hidden
/// activation, and the initialization seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
}

impl NetConfig {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, init_seed: u64) -> Self {
        Self {
            layer_widths,
            activation,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "layer_widths must list at least an input and an output width, got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "all layer widths must be >= 1, got {:?}",
                self.layer_widths
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated non-empty")
    }
}

/// One dense layer. Weights are row-major with shape `(out_width, in_width)`:
/// `weights[o * in_width + i]` connects input `i` to output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_width: usize,
    pub out_width: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_width: usize, out_width: usize) -> Self {
        Self {
            in_width,
            out_width,
            weights: vec![0.0; in_width * out_width],
            biases: vec![0.0; out_width],
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_width {
            let row = &self.weights[o * self.in_width..(o + 1) * self.in_width];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// A dense feed-forward network: hidden layers use the configured activation,
/// the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    layers: Vec<Layer>,
    config: NetConfig,
}

/// Per-parameter gradients, shape-congruent with the owning net.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<Layer>,
}

impl GradientSet {
    pub fn zeros_like(net: &FeedForwardNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_width, l.out_width))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (w, g) in a.weights.iter_mut().zip(&b.weights) {
                *w += g;
            }
            for (w, g) in a.biases.iter_mut().zip(&b.biases) {
                *w += g;
            }
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

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
    }
}

/// Builds a net from `config`: weights drawn uniformly from
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` using a ChaCha stream seeded with
/// `init_seed`, biases zero. Deterministic in the seed.
pub fn net_init(config: NetConfig) -> Result<FeedForwardNet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let mut layers = Vec::with_capacity(config.layer_widths.len() - 1);
    for pair in config.layer_widths.windows(2) {
        let (in_width, out_width) = (pair[0], pair[1]);
        let bound = 1.0 / (in_width as f64).sqrt();
        let weights = (0..in_width * out_width)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        layers.push(Layer {
            in_width,
            out_width,
            weights,
            biases: vec![0.0; out_width],
        });
    }
    Ok(FeedForwardNet { layers, config })
}

impl FeedForwardNet {
    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.config.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.config.output_width()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Zeroes the output layer's weights and biases. Residual heads start
    /// from this state so the residual contributes exactly 0 at step 0.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("net has at least one layer");
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.biases.iter_mut().for_each(|b| *b = 0.0);
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::Shape(format!(
                "input length {} does not match first layer width {}",
                input.len(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Runs the net on `input` and returns the linear output activations.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if idx != last {
                for z in &mut next {
                    *z = self.config.activation.apply(*z);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass that keeps per-layer pre-activations and activations for
    /// the backward pass. `activations[0]` is the input itself.
    fn forward_cached(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let last = self.layers.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        activations.push(input.to_vec());
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(activations.last().expect("non-empty"), &mut z);
            preacts.push(z.clone());
            if idx != last {
                for v in &mut z {
                    *v = self.config.activation.apply(*v);
                }
            }
            activations.push(z);
        }
        (activations, preacts)
    }

    /// Exact reverse-mode gradients of the scalar `upstream . output` with
    /// respect to all parameters.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<GradientSet> {
        Ok(self.backward_io(input, upstream)?.0)
    }

    /// Like [`backward`](Self::backward) but also returns the gradient with
    /// respect to the input vector, for composing nets.
    pub fn backward_io(&self, input: &[f64], upstream: &[f64]) -> Result<(GradientSet, Vec<f64>)> {
        self.check_input(input)?;
        if upstream.len() != self.output_width() {
            return Err(Error::Shape(format!(
                "upstream length {} does not match output width {}",
                upstream.len(),
                self.output_width()
            )));
        }

        let (activations, preacts) = self.forward_cached(input);
        let mut grads = GradientSet::zeros_like(self);

        // Output layer is linear, so its delta is the upstream itself.
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let below = &activations[l];
            let grad_layer = &mut grads.layers[l];
            for o in 0..layer.out_width {
                let d = delta[o];
                grad_layer.biases[o] = d;
                let row = &mut grad_layer.weights[o * layer.in_width..(o + 1) * layer.in_width];
                for (g, x) in row.iter_mut().zip(below) {
                    *g = d * x;
                }
            }
            // Propagate to the layer below: W^T delta, then the activation
            // derivative of that layer's pre-activation.
            let mut next_delta = vec![0.0; layer.in_width];
            for o in 0..layer.out_width {
                let d = delta[o];
                let row = &layer.weights[o * layer.in_width..(o + 1) * layer.in_width];
                for (nd, w) in next_delta.iter_mut().zip(row) {
                    *nd += w * d;
                }
            }
            if l > 0 {
                for (nd, z) in next_delta.iter_mut().zip(&preacts[l - 1]) {
                    *nd *= self.config.activation.derivative(*z);
                }
            }
            delta = next_delta;
        }
        Ok((grads, delta))
    }

    /// Appends all parameters (weights row-major, then biases, per layer) to
    /// `out`. This is the canonical flat order used by the optimizer and the
    /// serialized form.
    pub fn flatten_params_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
    }

    /// Reads parameters back from `flat` starting at `offset`; returns the
    /// offset just past this net's parameters.
    pub fn unflatten_params_from(&mut self, flat: &[f64], mut offset: usize) -> Result<usize> {
        for l in &mut self.layers {
            let need = l.weights.len() + l.biases.len();
            if offset + need > flat.len() {
                return Err(Error::Shape(format!(
                    "flat parameter array too short: need {} more at offset {}",
                    need, offset
                )));
            }
            let w_len = l.weights.len();
            l.weights.copy_from_slice(&flat[offset..offset + w_len]);
            offset += w_len;
            let b_len = l.biases.len();
            l.biases.copy_from_slice(&flat[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(offset)
    }
}

/// A bias-free linear map, used for attention projections. Row-major with
/// shape `(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
}

impl LinearMap {
    /// Seeded uniform init scaled by `1/sqrt(cols)` (fan-in).
    pub fn init(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (cols as f64).sqrt();
        let weights = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { rows, cols, weights }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
        out
    }

    /// Accumulates `dW += upstream (outer) x` into `grad` and returns the
    /// input gradient `W^T upstream`.
    pub fn backward_accum(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.weights.len());
        let mut dx = vec![0.0; self.cols];
        for r in 0..self.rows {
            let u = upstream[r];
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let grow = &mut grad[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                grow[c] += u * x[c];
                dx[c] += row[c] * u;
            }
        }
        dx
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len()
    }
}

/// Numerically stable sigmoid, `1 / (1 + e^-x)`.
pub fn sigmoid(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Numeric(format!("sigmoid input must be finite, got {x}")));
    }
    Ok(sigmoid_stable(x))
}

pub(crate) fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable `log(1 + e^x)`.
pub fn softplus(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Numeric(format!("softplus input must be finite, got {x}")));
    }
    Ok(softplus_stable(x))
}

pub(crate) fn softplus_stable(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Softmax with max-subtraction; entries positive and summing to 1.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Shape("softmax input must be non-empty".to_string()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("softmax input must be finite".to_string()));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}
