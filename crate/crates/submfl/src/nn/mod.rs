//! Minimal feedforward network with exact analytic gradients.
//!
//! Hidden layers are ReLU, the output layer emits raw logits, and the loss
//! is mean softmax cross-entropy. All arithmetic is `f64` and every
//! operation is a pure function of its inputs, so results are bitwise
//! reproducible.

mod adam;

pub use adam::{adam_step, AdamState, Hyperparams};

use rand::distributions::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Hidden-layer activation. Only ReLU is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        "relu"
    }
}

/// Architecture of a fully-connected network: layer sizes from input to
/// output, ReLU between hidden layers, raw logits at the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 layers, got {}",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has size 0")));
        }
        Ok(NetworkSpec {
            layer_sizes,
            activation: Activation::Relu,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total parameter count (weights and biases).
    pub fn total_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Weight-matrix entry count (excludes biases).
    pub fn weight_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

/// One affine layer: row-major `weights` with shape `(out_dim, in_dim)`
/// plus `biases` of length `out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// All parameters of a network.
///
/// The flat enumeration order is fixed and load-bearing for checkpoints,
/// masks, and pruning tie-breaks: layer by layer, each layer's weight
/// matrix in row-major order followed by its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    spec: NetworkSpec,
    layers: Vec<LayerParams>,
}

impl ParamSet {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| LayerParams {
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        ParamSet {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        Self::zeros(&other.spec)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn total_params(&self) -> usize {
        self.spec.total_params()
    }

    pub fn weight_count(&self) -> usize {
        self.spec.weight_count()
    }

    /// Values in flat enumeration order.
    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    /// Flatten into a vector in the documented order.
    pub fn flatten(&self) -> Vec<f64> {
        self.iter_values().collect()
    }

    /// Rebuild from a flat vector; inverse of [`ParamSet::flatten`].
    pub fn from_flat(spec: &NetworkSpec, values: &[f64]) -> Result<Self> {
        if values.len() != spec.total_params() {
            return Err(Error::ShapeMismatch {
                context: "flat parameter vector",
                expected: spec.total_params(),
                found: values.len(),
            });
        }
        let mut params = ParamSet::zeros(spec);
        let mut off = 0;
        for layer in &mut params.layers {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&values[off..off + w]);
            off += w;
            let b = layer.biases.len();
            layer.biases.copy_from_slice(&values[off..off + b]);
            off += b;
        }
        Ok(params)
    }

    /// Count of parameters that are exactly zero (biases included).
    pub fn count_zeros(&self) -> usize {
        self.iter_values().filter(|&v| v == 0.0).count()
    }

    /// Count of parameters that are not exactly zero.
    pub fn count_nonzero(&self) -> usize {
        self.total_params() - self.count_zeros()
    }

    pub fn all_finite(&self) -> bool {
        self.iter_values().all(|v| v.is_finite())
    }

    fn congruent(&self, other: &ParamSet) -> bool {
        self.spec.layer_sizes == other.spec.layer_sizes
    }

    pub(crate) fn check_congruent(&self, other: &ParamSet, context: &'static str) -> Result<()> {
        if !self.congruent(other) {
            return Err(Error::ShapeMismatch {
                context,
                expected: self.total_params(),
                found: other.total_params(),
            });
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases; deterministic given `seed`.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<ParamSet> {
    // Re-validate; a NetworkSpec can only be built through `new`, but a
    // caller may have constructed the struct literally.
    let spec = NetworkSpec::new(spec.layer_sizes.clone())?;
    let mut rng = seeded_rng(seed);
    let mut params = ParamSet::zeros(&spec);
    for (idx, layer) in params.layers.iter_mut().enumerate() {
        let fan_in = spec.layer_sizes[idx] as f64;
        let fan_out = spec.layer_sizes[idx + 1] as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        for w in &mut layer.weights {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Forward pass over a batch of inputs packed row-major into one slice.
/// Returns `batch * output_dim` logits.
pub fn forward(params: &ParamSet, inputs: &[f64]) -> Result<Vec<f64>> {
    let d = params.spec.input_dim();
    if inputs.is_empty() || !inputs.len().is_multiple_of(d) {
        return Err(Error::ShapeMismatch {
            context: "forward input length",
            expected: d,
            found: inputs.len(),
        });
    }
    let batch = inputs.len() / d;
    let out_dim = params.spec.output_dim();
    let mut logits = vec![0.0; batch * out_dim];
    let mut cur = Vec::new();
    let mut next = Vec::new();
    for s in 0..batch {
        let x = &inputs[s * d..(s + 1) * d];
        forward_sample(params, x, &mut cur, &mut next);
        logits[s * out_dim..(s + 1) * out_dim].copy_from_slice(&cur);
    }
    Ok(logits)
}

/// One sample through the network; `cur` holds the output on return.
fn forward_sample(params: &ParamSet, x: &[f64], cur: &mut Vec<f64>, next: &mut Vec<f64>) {
    let n_layers = params.spec.num_layers();
    cur.clear();
    cur.extend_from_slice(x);
    for (l, layer) in params.layers.iter().enumerate() {
        let in_dim = params.spec.layer_sizes[l];
        let out_dim = params.spec.layer_sizes[l + 1];
        next.clear();
        next.resize(out_dim, 0.0);
        affine(&layer.weights, &layer.biases, cur, next, in_dim, out_dim);
        if l + 1 < n_layers {
            for v in next.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        std::mem::swap(cur, next);
    }
}

fn affine(weights: &[f64], biases: &[f64], x: &[f64], out: &mut [f64], in_dim: usize, out_dim: usize) {
    for o in 0..out_dim {
        let row = &weights[o * in_dim..(o + 1) * in_dim];
        let mut sum = biases[o];
        for (w, xi) in row.iter().zip(x.iter()) {
            sum += w * xi;
        }
        out[o] = sum;
    }
}

/// Log-sum-exp with the usual max shift; finite for logits up to ~1e300.
fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln()
}

/// Mean softmax cross-entropy over a batch, plus exact analytic gradients
/// of that mean with respect to every parameter.
///
/// `inputs` packs `batch` feature vectors row-major; `labels` has one class
/// index per sample.
pub fn loss_and_grads(
    params: &ParamSet,
    inputs: &[f64],
    labels: &[usize],
) -> Result<(f64, ParamSet)> {
    let d = params.spec.input_dim();
    if inputs.is_empty() || !inputs.len().is_multiple_of(d) {
        return Err(Error::ShapeMismatch {
            context: "batch input length",
            expected: d,
            found: inputs.len(),
        });
    }
    let batch = inputs.len() / d;
    if labels.len() != batch {
        return Err(Error::ShapeMismatch {
            context: "batch label count",
            expected: batch,
            found: labels.len(),
        });
    }
    let classes = params.spec.output_dim();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }

    let n_layers = params.spec.num_layers();
    let mut grads = ParamSet::zeros_like(params);
    let mut total_loss = 0.0;

    // Per-layer activations for one sample; acts[0] is the input.
    let mut acts: Vec<Vec<f64>> = params
        .spec
        .layer_sizes
        .iter()
        .map(|&s| vec![0.0; s])
        .collect();
    let mut delta = Vec::new();
    let mut delta_prev = Vec::new();

    for s in 0..batch {
        let x = &inputs[s * d..(s + 1) * d];
        acts[0].copy_from_slice(x);
        for l in 0..n_layers {
            let (lo, hi) = acts.split_at_mut(l + 1);
            let input = &lo[l];
            let out = &mut hi[0];
            let layer = &params.layers[l];
            let in_dim = params.spec.layer_sizes[l];
            let out_dim = params.spec.layer_sizes[l + 1];
            affine(&layer.weights, &layer.biases, input, out, in_dim, out_dim);
            if l + 1 < n_layers {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }

        let logits = &acts[n_layers];
        let lse = log_sum_exp(logits);
        total_loss += lse - logits[labels[s]];

        // dL/dlogits = softmax - onehot (per sample; mean applied at the end).
        delta.clear();
        delta.extend(logits.iter().map(|&v| (v - lse).exp()));
        delta[labels[s]] -= 1.0;

        for l in (0..n_layers).rev() {
            let in_dim = params.spec.layer_sizes[l];
            let glayer = &mut grads.layers[l];
            let input = &acts[l];
            for ((&dz, gb), grow) in delta
                .iter()
                .zip(glayer.biases.iter_mut())
                .zip(glayer.weights.chunks_exact_mut(in_dim))
            {
                *gb += dz;
                for (g, xi) in grow.iter_mut().zip(input.iter()) {
                    *g += dz * xi;
                }
            }
            if l > 0 {
                // delta_prev = W^T delta, gated by ReLU (activation > 0).
                delta_prev.clear();
                delta_prev.resize(in_dim, 0.0);
                let weights = &params.layers[l].weights;
                for (&dz, row) in delta.iter().zip(weights.chunks_exact(in_dim)) {
                    for (dp, w) in delta_prev.iter_mut().zip(row.iter()) {
                        *dp += w * dz;
                    }
                }
                for (dp, &a) in delta_prev.iter_mut().zip(acts[l].iter()) {
                    if a <= 0.0 {
                        *dp = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
    }

    let scale = 1.0 / batch as f64;
    for layer in &mut grads.layers {
        for w in &mut layer.weights {
            *w *= scale;
        }
        for b in &mut layer.biases {
            *b *= scale;
        }
    }
    Ok((total_loss * scale, grads))
}

/// Mean loss and argmax accuracy over a dataset. Argmax ties break toward
/// the lowest class index.
pub fn evaluate(params: &ParamSet, dataset: &crate::data::Dataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation dataset".into()));
    }
    let d = params.spec.input_dim();
    if dataset.dim() != d {
        return Err(Error::ShapeMismatch {
            context: "dataset feature dimension",
            expected: d,
            found: dataset.dim(),
        });
    }
    let classes = params.spec.output_dim();
    if dataset.classes() > classes {
        return Err(Error::ShapeMismatch {
            context: "dataset class count",
            expected: classes,
            found: dataset.classes(),
        });
    }

    let mut cur = Vec::new();
    let mut next = Vec::new();
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        forward_sample(params, dataset.feature_row(i), &mut cur, &mut next);
        let lse = log_sum_exp(&cur);
        let label = dataset.label(i);
        total_loss += lse - cur[label];
        let mut best = 0;
        for (c, &v) in cur.iter().enumerate() {
            if v > cur[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    let n = dataset.len() as f64;
    Ok((total_loss / n, correct as f64 / n))
}

#[cfg(test)]
mod tests;
