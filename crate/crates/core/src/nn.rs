//! Small fully connected networks: layer specs, seeded initialization, and
//! forward passes both as plain matrix code (inference) and as graph nodes
//! (training).

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::matrix::Matrix;
use crate::seed;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Softplus,
    Sigmoid,
}

/// Architecture of a fully connected network. `widths` lists the input width
/// followed by every layer's output width; `activations` has one entry per
/// layer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Contract("an MLP needs at least one layer".into()));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Contract("layer widths must be positive".into()));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::Contract(format!(
                "{} layers need {} activations, got {}",
                widths.len() - 1,
                widths.len() - 1,
                activations.len()
            )));
        }
        Ok(MlpSpec { widths, activations, seed })
    }

    /// ReLU hidden layers with a linear head, the stack used throughout.
    pub fn relu_net(widths: Vec<usize>, seed: u64) -> Result<Self> {
        let n = widths.len().saturating_sub(1);
        let mut activations = vec![Activation::Relu; n];
        if let Some(last) = activations.last_mut() {
            *last = Activation::Linear;
        }
        MlpSpec::new(widths, activations, seed)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Weights and biases of one network. Weight `l` maps rows of width
/// `widths[l]` to `widths[l+1]`; biases are 1 x width rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl MlpParams {
    /// Seeded uniform initialization in +-sqrt(6 / (fan_in + fan_out)),
    /// biases zero.
    pub fn init(spec: &MlpSpec) -> Self {
        let mut rng = seed::rng(seed::derive(spec.seed, 0x6e65_7477));
        let mut weights = Vec::with_capacity(spec.n_layers());
        let mut biases = Vec::with_capacity(spec.n_layers());
        for l in 0..spec.n_layers() {
            let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Matrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-bound..bound));
            weights.push(w);
            biases.push(Matrix::zeros(1, fan_out));
        }
        MlpParams { weights, biases }
    }

    /// Flat view in layer order (weight then bias per layer), used by the
    /// optimizer and checkpoints.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for l in 0..self.weights.len() {
            out.push(&self.weights[l]);
            out.push(&self.biases[l]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// A spec paired with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Self {
        let params = MlpParams::init(&spec);
        Mlp { spec, params }
    }

    /// Plain forward pass. Deterministic given parameters and input.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.spec.input_width() {
            return Err(Error::Dimension(format!(
                "input width {} but the first layer expects {}",
                input.cols(),
                self.spec.input_width()
            )));
        }
        let mut h = input.matmul(&self.params.weights[0]);
        add_bias_inplace(&mut h, &self.params.biases[0]);
        apply_activation(&mut h, self.spec.activations[0]);
        for l in 1..self.spec.n_layers() {
            let mut next = h.matmul(&self.params.weights[l]);
            add_bias_inplace(&mut next, &self.params.biases[l]);
            apply_activation(&mut next, self.spec.activations[l]);
            h = next;
        }
        Ok(h)
    }
}

fn add_bias_inplace(m: &mut Matrix, bias: &Matrix) {
    let (rows, cols) = m.shape();
    for i in 0..rows {
        for j in 0..cols {
            m.set(i, j, m.get(i, j) + bias.get(0, j));
        }
    }
}

fn apply_activation(m: &mut Matrix, act: Activation) {
    match act {
        Activation::Linear => {}
        Activation::Relu => m.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Softplus => m
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = v.max(0.0) + (-v.abs()).exp().ln_1p()),
        Activation::Sigmoid => m.data_mut().iter_mut().for_each(|v| {
            *v = if *v >= 0.0 { 1.0 / (1.0 + (-*v).exp()) } else { v.exp() / (1.0 + v.exp()) }
        }),
    }
}

/// Graph-side handles for one network's parameters.
#[derive(Debug, Clone)]
pub struct MlpNodes {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

impl MlpNodes {
    /// Register all parameters of `mlp` as trainable graph leaves.
    pub fn register(g: &mut Graph, mlp: &Mlp) -> Self {
        let weights = mlp.params.weights.iter().map(|w| g.param(w.clone())).collect();
        let biases = mlp.params.biases.iter().map(|b| g.param(b.clone())).collect();
        MlpNodes { weights, biases }
    }

    /// Forward pass as graph nodes.
    pub fn forward(&self, g: &mut Graph, spec: &MlpSpec, input: NodeId) -> NodeId {
        let mut h = input;
        for l in 0..spec.n_layers() {
            h = g.matmul(h, self.weights[l]);
            h = g.add_bias(h, self.biases[l]);
            h = match spec.activations[l] {
                Activation::Linear => h,
                Activation::Relu => g.relu(h),
                Activation::Softplus => g.softplus(h),
                Activation::Sigmoid => g.sigmoid(h),
            };
        }
        h
    }

    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for l in 0..self.weights.len() {
            out.push(self.weights[l]);
            out.push(self.biases[l]);
        }
        out
    }
}
