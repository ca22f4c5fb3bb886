//! Q-value approximators: an exact table and a fully connected network.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::features::{FeatureLayout, FeatureVector};
use crate::error::{Error, Result};

/// Exact lookup table indexed by the joint hot position of every one-hot
/// block in its layout. Rows are allocated on first write; unwritten rows
/// read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    block_sizes: Vec<usize>,
    outputs: usize,
    rows: BTreeMap<usize, Box<[f64]>>,
    zeros: Box<[f64]>,
}

impl QTable {
    pub fn new(layout: &FeatureLayout, outputs: usize) -> Result<Self> {
        if !layout.all_one_hot() {
            return Err(Error::NotOneHot("table layouts must be all one-hot".into()));
        }
        let block_sizes: Vec<usize> = layout.blocks().iter().map(|b| b.size).collect();
        Ok(Self::from_parts(block_sizes, outputs, BTreeMap::new()))
    }

    pub(crate) fn from_parts(block_sizes: Vec<usize>, outputs: usize, rows: BTreeMap<usize, Box<[f64]>>) -> Self {
        Self { block_sizes, outputs, rows, zeros: vec![0.0; outputs].into() }
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    /// Number of addressable rows.
    pub fn n_rows(&self) -> usize {
        self.block_sizes.iter().product()
    }

    /// Rows written so far, in index order.
    pub fn stored_rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&r, v)| (r, &v[..]))
    }

    pub fn row_of(&self, features: &FeatureVector) -> Result<usize> {
        let hot = features.hot_indices()?;
        if hot.len() != self.block_sizes.len() {
            return Err(Error::NotOneHot("block count differs from table".into()));
        }
        Ok(hot.iter().zip(&self.block_sizes).fold(0, |row, (&h, &size)| row * size + h))
    }

    pub fn row(&self, row: usize) -> &[f64] {
        self.rows.get(&row).unwrap_or(&self.zeros)
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        assert!(row < self.n_rows(), "row {row} out of range");
        let zeros = &self.zeros;
        self.rows.entry(row).or_insert_with(|| zeros.clone())
    }
}

/// One fully connected layer. Weights are stored input-major so a sparse
/// input touches contiguous rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Weights uniform in +-1/sqrt(fan_in), zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[input * self.outputs + output]
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
        }
    }
}

/// Rectified hidden layers and a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Parameter gradients laid out like [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

impl Mlp {
    /// `sizes` = [input, hidden..., output].
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        Self { layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        assert!(!layers.is_empty());
        for w in layers.windows(2) {
            assert_eq!(w[0].outputs, w[1].inputs, "layer sizes do not chain");
        }
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights then bias, layer by layer.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + n]);
            at += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + n]);
            at += n;
        }
    }

    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn grads(&self) -> MlpGrads {
        MlpGrads { layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect() }
    }

    /// Activations of every layer; `trace[0]` is the input, the last entry the output.
    pub fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(&trace[k], &mut out);
            if k < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            trace.push(out);
        }
        trace
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().expect("non-empty trace")
    }

    /// Accumulates into `grads` the gradient of `sum_o d_out[o] * y[o]`.
    pub fn backward(&self, trace: &[Vec<f64>], d_out: &[f64], grads: &mut MlpGrads) {
        let mut delta = d_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads.layers[k];
            let input = &trace[k];
            let active: Vec<usize> = (0..delta.len()).filter(|&o| delta[o] != 0.0).collect();
            for &o in &active {
                g.bias[o] += delta[o];
            }
            for (i, &xi) in input.iter().enumerate() {
                if xi != 0.0 {
                    let row = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                    for &o in &active {
                        row[o] += xi * delta[o];
                    }
                }
            }
            if k == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (i, p) in prev.iter_mut().enumerate() {
                // rectifier gate: inactive units pass no gradient
                if input[i] > 0.0 {
                    let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                    *p = active.iter().map(|&o| row[o] * delta[o]).sum();
                }
            }
            delta = prev;
        }
    }

    pub fn sgd_step(&mut self, grads: &MlpGrads, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, d) in l.weights.iter_mut().zip(&g.weights) {
                *w -= lr * d;
            }
            for (b, d) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Backend {
    Table(QTable),
    Network(Mlp),
}

/// A Q-function whose output is split into `heads` equal-width heads.
#[derive(Clone, Debug, PartialEq)]
pub struct QApproximator {
    input_size: usize,
    output_size: usize,
    heads: usize,
    backend: Backend,
}

impl QApproximator {
    pub fn table(layout: &FeatureLayout, outputs: usize) -> Result<Self> {
        Ok(Self {
            input_size: layout.len(),
            output_size: outputs,
            heads: 1,
            backend: Backend::Table(QTable::new(layout, outputs)?),
        })
    }

    pub fn network(mlp: Mlp) -> Self {
        Self { input_size: mlp.input_size(), output_size: mlp.output_size(), heads: 1, backend: Backend::Network(mlp) }
    }

    pub(crate) fn from_backend(backend: Backend, heads: usize) -> Self {
        let (input_size, output_size) = match &backend {
            Backend::Table(t) => (t.block_sizes.iter().sum(), t.outputs),
            Backend::Network(m) => (m.input_size(), m.output_size()),
        };
        Self { input_size, output_size, heads, backend }
    }

    /// Splits the output into `heads` equal heads.
    pub fn with_heads(mut self, heads: usize) -> Self {
        assert!(heads >= 1 && self.output_size.is_multiple_of(heads), "output not divisible into heads");
        self.heads = heads;
        self
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_width(&self) -> usize {
        self.output_size / self.heads
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut Backend {
        &mut self.backend
    }

    pub fn is_table(&self) -> bool {
        matches!(self.backend, Backend::Table(_))
    }

    fn check(&self, features: &FeatureVector) -> Result<()> {
        if features.len() != self.input_size {
            return Err(Error::SizeMismatch { expected: self.input_size, got: features.len() });
        }
        Ok(())
    }

    pub fn q_values(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        self.check(features)?;
        match &self.backend {
            Backend::Table(t) => Ok(t.row(t.row_of(features)?).to_vec()),
            Backend::Network(m) => Ok(m.forward(&features.values)),
        }
    }

    pub fn param_count(&self) -> usize {
        match &self.backend {
            Backend::Table(t) => t.n_rows() * t.outputs,
            Backend::Network(m) => m.param_count(),
        }
    }

    pub fn copy_params_from(&mut self, other: &QApproximator) {
        assert_eq!(self.param_count(), other.param_count());
        self.backend = other.backend.clone();
    }
}

/// Shared handle for read-only use by actors.
pub type SharedApproximator = Arc<QApproximator>;

/// Max relative error between backpropagated gradients of
/// `q(features)[action]` and central finite differences with step `h`.
///
/// Relative error is `|a - n| / max(|a| + |n|, 1e-6)`; the floor keeps
/// parameters whose gradient is exactly zero from dividing roundoff by zero.
pub fn finite_diff_gradcheck(mlp: &Mlp, features: &[f64], action: usize, h: f64) -> f64 {
    let trace = mlp.forward_trace(features);
    let mut d_out = vec![0.0; mlp.output_size()];
    d_out[action] = 1.0;
    let mut grads = mlp.grads();
    mlp.backward(&trace, &d_out, &mut grads);
    let analytic = grads.flat();

    let mut probe = mlp.clone();
    let mut worst = 0.0f64;
    for (p, &a) in analytic.iter().enumerate() {
        let original = *probe.param_mut(p);
        *probe.param_mut(p) = original + h;
        let plus = probe.forward(features)[action];
        *probe.param_mut(p) = original - h;
        let minus = probe.forward(features)[action];
        *probe.param_mut(p) = original;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
