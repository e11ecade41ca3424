use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{active_count, SparseLayer};
use crate::error::{Error, Result};

/// Hidden sizes used by every experiment unless overridden.
pub const DEFAULT_HIDDEN: [usize; 2] = [1000, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Used for linear networks in tests and analysis.
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Relu {
            z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
        }
    }

    /// Multiplies `delta` by the derivative evaluated at the post-activation value.
    /// The ReLU sub-gradient at zero is zero.
    fn backprop(self, delta: &mut Array2<f64>, activated: ArrayView2<'_, f64>) {
        if self == Activation::Relu {
            delta.zip_mut_with(&activated, |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
        }
    }
}

/// Sparse MLP: hidden layers share one activation, the output layer produces logits
/// that are turned into class probabilities by a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<SparseLayer>,
    hidden_activation: Activation,
    step_count: u64,
}

/// Everything the backward and attribution passes need from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `inputs[l]` is the input of layer `l`; `inputs[0]` is the batch itself.
    pub inputs: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
}

impl ForwardPass {
    pub fn batch_size(&self) -> usize {
        self.logits.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Per layer, aligned with the layer's active coordinates.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Mean cross-entropy plus the L2 penalty.
    pub loss: f64,
    pub data_loss: f64,
}

impl Network {
    /// `d -> 1000 -> 100 -> classes` ReLU network at sparsity `sparsity` in every layer.
    pub fn init(n_features: usize, n_classes: usize, sparsity: f64, seed: u64) -> Result<Self> {
        Self::with_hidden(
            n_features,
            &DEFAULT_HIDDEN,
            n_classes,
            sparsity,
            Activation::Relu,
            seed,
        )
    }

    pub fn with_hidden(
        n_features: usize,
        hidden: &[usize],
        n_classes: usize,
        sparsity: f64,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&sparsity) {
            return Err(Error::Config(format!(
                "sparsity must lie in [0, 1), got {sparsity}"
            )));
        }
        if n_features == 0 || n_classes == 0 || hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = std::iter::once(n_features)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(n_classes))
            .collect();
        let layers = dims
            .windows(2)
            .map(|w| {
                let nnz = active_count(w[0], w[1], sparsity);
                if nnz == 0 {
                    return Err(Error::Config(format!(
                        "sparsity {sparsity} leaves no active weights in a {}x{} layer",
                        w[0], w[1]
                    )));
                }
                SparseLayer::random(w[0], w[1], nnz, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, activation)
    }

    pub fn from_layers(layers: Vec<SparseLayer>, hidden_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (l, w) in layers.windows(2).enumerate() {
            if w[0].n_out() != w[1].n_in() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} but layer {} expects {}",
                    w[0].n_out(),
                    l + 1,
                    w[1].n_in()
                )));
            }
        }
        Ok(Network {
            layers,
            hidden_activation,
            step_count: 0,
        })
    }

    pub fn layers(&self) -> &[SparseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [SparseLayer] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub(crate) fn set_step_count(&mut self, t: u64) {
        self.step_count = t;
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    /// Layer widths `[d, h1, ..., C]`.
    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.n_features())
            .chain(self.layers.iter().map(|l| l.n_out()))
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.layers.iter().map(|l| l.nnz()).sum()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<ForwardPass> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.n_features()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_owned());
        for layer in &self.layers[..last] {
            let mut z = layer.forward(inputs.last().expect("non-empty").view());
            self.hidden_activation.apply(&mut z);
            inputs.push(z);
        }
        let logits = self.layers[last].forward(inputs[last].view());
        let probabilities = softmax(logits.view());
        Ok(ForwardPass {
            inputs,
            logits,
            probabilities,
        })
    }

    /// Output-side gradient of every layer for the mean cross-entropy loss.
    pub fn deltas(&self, fp: &ForwardPass, labels: &[usize]) -> Result<Vec<Array2<f64>>> {
        let m = fp.batch_size();
        if labels.len() != m {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {m}",
                labels.len()
            )));
        }
        let c = self.n_classes();
        let mut delta = fp.probabilities.clone();
        for (s, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::Data(format!("label {y} outside [0, {c})")));
            }
            delta[[s, y]] -= 1.0;
        }
        delta.mapv_inplace(|v| v / m as f64);
        Ok(self.backprop_deltas(fp, delta))
    }

    /// Pushes an output-layer delta back through the hidden layers.
    pub(crate) fn backprop_deltas(
        &self,
        fp: &ForwardPass,
        output_delta: Array2<f64>,
    ) -> Vec<Array2<f64>> {
        let n = self.layers.len();
        let mut deltas = vec![Array2::zeros((0, 0)); n];
        deltas[n - 1] = output_delta;
        for l in (1..n).rev() {
            let mut d = self.layers[l].backprop_input(deltas[l].view());
            self.hidden_activation.backprop(&mut d, fp.inputs[l].view());
            deltas[l - 1] = d;
        }
        deltas
    }

    /// Gradients of mean cross-entropy plus `l2 * sum(w^2)` on active weights.
    pub fn backward(&self, fp: &ForwardPass, labels: &[usize], l2: f64) -> Result<Gradients> {
        let deltas = self.deltas(fp, labels)?;
        let data_loss = cross_entropy(fp.logits.view(), labels);
        let mut penalty = 0.0;
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut g = layer.weight_grad(fp.inputs[l].view(), deltas[l].view());
            if l2 != 0.0 {
                for (gk, &w) in g.iter_mut().zip(layer.values()) {
                    *gk += 2.0 * l2 * w;
                    penalty += w * w;
                }
            }
            weights.push(g);
            biases.push(deltas[l].sum_axis(Axis(0)).to_vec());
        }
        Ok(Gradients {
            weights,
            biases,
            loss: data_loss + l2 * penalty,
            data_loss,
        })
    }

    /// Mean cross-entropy of the network on a labelled batch.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        let fp = self.forward(x)?;
        if labels.len() != fp.batch_size() {
            return Err(Error::Shape("label count differs from batch size".into()));
        }
        Ok(cross_entropy(fp.logits.view(), labels))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let fp = self.forward(x)?;
        Ok(fp
            .logits
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect())
    }

    pub(crate) fn apply_adam(&mut self, grads: &Gradients, hp: &super::optim::Adam) {
        self.step_count += 1;
        let t = self.step_count;
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.adam_update(&grads.weights[l], &grads.biases[l], hp, t);
        }
    }
}

pub(crate) fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

/// Mean categorical cross-entropy computed from logits through log-sum-exp.
pub fn cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let m = logits.nrows();
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .sum();
    total / m as f64
}
