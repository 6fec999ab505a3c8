//! Small fully-connected classifier trained with minibatch SGD.
//!
//! Hidden layers use ReLU or tanh, the output layer softmax with mean
//! cross-entropy loss. Layer `k` stores its weights as an `inputs x outputs`
//! [`LayerWeights`], so the rows of the matrix are the input-side vertices of
//! the layer graph. Installed masks are re-applied after every update; masked
//! weights are exactly zero whenever the network is observable.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::persistence::{layer_report, NormOrder, NpReport};
use crate::pruning::PruneMask;
use crate::{Error, LayerWeights, Result};

/// Layer widths of the default desk-scale network.
pub const DESK_LAYERS: [usize; 5] = [20, 64, 32, 16, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: LayerWeights,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    #[inline]
    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    activation: Activation,
    masks: Vec<Option<PruneMask>>,
}

/// Activations cached by [`DenseNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    batch: usize,
    /// `activations[0]` is the input, the last entry the softmax output.
    activations: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardPass {
    #[inline]
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Row-major `batch x classes` class probabilities.
    pub fn probabilities(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Row-major logits of the output layer.
    pub fn logits(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Mean cross-entropy against `labels`.
    pub fn loss(&self, labels: &[usize]) -> Result<f64> {
        let probs = self.probabilities();
        let classes = probs.len() / self.batch.max(1);
        check_labels(labels, self.batch, classes)?;
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -libm::log(probs[i * classes + y].max(f64::MIN_POSITIVE)))
            .sum();
        Ok(total / self.batch as f64)
    }
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::DimensionMismatch(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyArchitecture);
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {k}: bias has {} entries for {} outputs",
                    l.bias.len(),
                    l.outputs()
                )));
            }
            if l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::DimensionMismatch(format!("layer {k}: non-finite bias")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {k} has {} outputs but layer {} expects {} inputs",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        let masks = vec![None; layers.len()];
        Ok(Self { layers, activation, masks })
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::EmptyArchitecture);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                if fan_in == 0 || fan_out == 0 {
                    return Err(Error::EmptyLayer { rows: fan_in, cols: fan_out });
                }
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                let values = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                Ok(DenseLayer { weights: LayerWeights::new(fan_in, fan_out, values)?, bias: vec![0.0; fan_out] })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, activation)
    }

    #[inline]
    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(DenseLayer::outputs));
        dims
    }

    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs(), l.outputs())).collect()
    }

    /// Number of weights, biases excluded.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite { index: row * self.layers[layer].outputs() + col });
        }
        let l = &mut self.layers[layer];
        let cols = l.outputs();
        l.weights.values_mut()[row * cols + col] = value;
        Ok(())
    }

    pub fn set_bias(&mut self, layer: usize, index: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        self.layers[layer].bias[index] = value;
        Ok(())
    }

    pub fn masks(&self) -> &[Option<PruneMask>] {
        &self.masks
    }

    /// Installs one mask per layer and zeroes the masked weights.
    pub fn set_masks(&mut self, masks: Vec<PruneMask>) -> Result<()> {
        if masks.len() != self.layers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} masks for {} layers",
                masks.len(),
                self.layers.len()
            )));
        }
        for (k, (mask, layer)) in masks.iter().zip(&self.layers).enumerate() {
            if mask.shape() != (layer.inputs(), layer.outputs()) {
                return Err(Error::DimensionMismatch(format!(
                    "mask {k} has shape {:?}, layer is {}x{}",
                    mask.shape(),
                    layer.inputs(),
                    layer.outputs()
                )));
            }
        }
        self.masks = masks.into_iter().map(Some).collect();
        self.apply_masks();
        Ok(())
    }

    pub fn clear_masks(&mut self) {
        self.masks.iter_mut().for_each(|m| *m = None);
    }

    fn apply_masks(&mut self) {
        for (layer, mask) in self.layers.iter_mut().zip(&self.masks) {
            if let Some(mask) = mask {
                mask.apply_in_place(layer.weights.values_mut());
            }
        }
    }

    /// Runs a row-major `batch x input_dim` feature block through the network.
    pub fn forward(&self, features: &[f64], batch: usize) -> Result<ForwardPass> {
        let width = self.input_dim();
        if batch == 0 || features.len() != batch * width {
            return Err(Error::DimensionMismatch(format!(
                "expected {batch} x {width} = {} features, got {}",
                batch * width,
                features.len()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(features.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = &activations[k];
            let (n_in, n_out) = (layer.inputs(), layer.outputs());
            let w = layer.weights.values();
            let mut z = vec![0.0; batch * n_out];
            for b in 0..batch {
                let row = &mut z[b * n_out..(b + 1) * n_out];
                row.copy_from_slice(&layer.bias);
                for i in 0..n_in {
                    let x = input[b * n_in + i];
                    if x == 0.0 {
                        continue;
                    }
                    for (acc, wij) in row.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                        *acc += x * wij;
                    }
                }
            }
            let a = if k == last {
                softmax_rows(&z, n_out)
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            activations.push(a);
        }
        Ok(ForwardPass { batch, activations, pre })
    }

    /// Gradients of the mean cross-entropy; masked weight gradients are zero.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Gradients> {
        if pass.activations.len() != self.layers.len() + 1 {
            return Err(Error::DimensionMismatch("forward pass does not match the network".into()));
        }
        let batch = pass.batch;
        let classes = self.output_dim();
        check_labels(labels, batch, classes)?;

        let mut delta = pass.probabilities().to_vec();
        for (b, &y) in labels.iter().enumerate() {
            delta[b * classes + y] -= 1.0;
        }
        let inv = 1.0 / batch as f64;
        delta.iter_mut().for_each(|d| *d *= inv);

        let mut gw = vec![Vec::new(); self.layers.len()];
        let mut gb = vec![Vec::new(); self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let (n_in, n_out) = (layer.inputs(), layer.outputs());
            let input = &pass.activations[k];
            let mut grad_w = vec![0.0; n_in * n_out];
            let mut grad_b = vec![0.0; n_out];
            for b in 0..batch {
                let d = &delta[b * n_out..(b + 1) * n_out];
                for (g, dj) in grad_b.iter_mut().zip(d) {
                    *g += dj;
                }
                for i in 0..n_in {
                    let x = input[b * n_in + i];
                    if x == 0.0 {
                        continue;
                    }
                    for (g, dj) in grad_w[i * n_out..(i + 1) * n_out].iter_mut().zip(d) {
                        *g += x * dj;
                    }
                }
            }
            if let Some(mask) = &self.masks[k] {
                mask.apply_in_place(&mut grad_w);
            }
            if k > 0 {
                let w = layer.weights.values();
                let z_prev = &pass.pre[k - 1];
                let a_prev = &pass.activations[k];
                let mut next = vec![0.0; batch * n_in];
                for b in 0..batch {
                    let d = &delta[b * n_out..(b + 1) * n_out];
                    for i in 0..n_in {
                        let s: f64 = w[i * n_out..(i + 1) * n_out].iter().zip(d).map(|(wij, dj)| wij * dj).sum();
                        let idx = b * n_in + i;
                        next[idx] = s * self.activation.derivative(z_prev[idx], a_prev[idx]);
                    }
                }
                delta = next;
            }
            gw[k] = grad_w;
            gb[k] = grad_b;
        }
        Ok(Gradients { weights: gw, biases: gb })
    }

    /// Mean cross-entropy on a batch.
    pub fn loss(&self, features: &[f64], labels: &[usize]) -> Result<f64> {
        self.forward(features, labels.len())?.loss(labels)
    }

    /// `w -= lr * g`, then re-applies the masks.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let gw = &grads.weights[k];
            let gb = &grads.biases[k];
            if gw.len() != layer.weights.len() || gb.len() != layer.bias.len() {
                return Err(Error::DimensionMismatch(format!("gradient shape mismatch at layer {k}")));
            }
            for (w, g) in layer.weights.values_mut().iter_mut().zip(gw) {
                *w -= learning_rate * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(gb) {
                *b -= learning_rate * g;
            }
        }
        self.apply_masks();
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.values().iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Neural persistence of every layer.
    pub fn layer_reports(&self, p: NormOrder) -> Vec<NpReport> {
        self.layers
            .iter()
            .enumerate()
            .map(|(k, l)| layer_report(k, &l.weights, p))
            .collect()
    }

    /// Predicted class per sample.
    pub fn predict(&self, features: &[f64], batch: usize) -> Result<Vec<usize>> {
        let pass = self.forward(features, batch)?;
        let classes = self.output_dim();
        Ok(pass
            .probabilities()
            .chunks(classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                    .0
            })
            .collect())
    }

    /// Mean loss and accuracy over a whole dataset.
    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        let pass = self.forward(&data.features, data.len())?;
        let loss = pass.loss(&data.labels)?;
        let predicted = self.predict(&data.features, data.len())?;
        let correct = predicted.iter().zip(&data.labels).filter(|(a, b)| a == b).count();
        Ok(Evaluation { loss, accuracy: correct as f64 / data.len() as f64 })
    }
}

fn softmax_rows(z: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    for row in z.chunks(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &v in row {
            let e = libm::exp(v - max);
            sum += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= sum);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Labelled samples with row-major features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 || classes == 0 || labels.is_empty() {
            return Err(Error::DimensionMismatch("dataset needs samples, features and classes".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {} samples of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite feature value".into()));
        }
        check_labels(&labels, labels.len(), classes)?;
        Ok(Self { features, labels, dim, classes })
    }

    /// Two interleaved half-moons in the plane with Gaussian noise, mapped to
    /// `dim` features through a fixed random linear lift plus small
    /// per-feature noise.
    pub fn lifted_moons(samples: usize, dim: usize, noise: f64, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionMismatch("lifted moons need at least 2 features".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lift: Vec<f64> = (0..2 * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut features = Vec::with_capacity(samples * dim);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let label = rng.random_range(0..2usize);
            let t = rng.random_range(0.0..core::f64::consts::PI);
            let (x, y) = if label == 0 {
                (libm::cos(t), libm::sin(t))
            } else {
                (1.0 - libm::cos(t), 0.5 - libm::sin(t))
            };
            let x = x + noise * rng.sample::<f64, _>(StandardNormal);
            let y = y + noise * rng.sample::<f64, _>(StandardNormal);
            for f in 0..dim {
                let jitter = 0.05 * rng.sample::<f64, _>(StandardNormal);
                features.push(lift[2 * f] * x + lift[2 * f + 1] * y + jitter);
            }
            labels.push(label);
        }
        Self::new(features, labels, dim, 2)
    }

    /// Two Gaussian blobs separated along a random direction by a wide margin.
    pub fn separable_blobs(samples: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = libm::sqrt(dir.iter().map(|d| d * d).sum::<f64>());
        dir.iter_mut().for_each(|d| *d /= norm);
        let mut features = Vec::with_capacity(samples * dim);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let label = rng.random_range(0..2usize);
            let shift = if label == 0 { -2.5 } else { 2.5 };
            for d in &dir {
                features.push(shift * d + 0.5 * rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(label);
        }
        Self::new(features, labels, dim, 2)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Splits off the last `fraction` of the samples as a validation set.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        let held = libm::round(self.len() as f64 * fraction) as usize;
        if held == 0 || held >= self.len() {
            return Err(Error::DimensionMismatch(format!(
                "validation fraction {fraction} leaves an empty split"
            )));
        }
        let cut = self.len() - held;
        let d = self.dim;
        Ok((
            Self::new(self.features[..cut * d].to_vec(), self.labels[..cut].to_vec(), d, self.classes)?,
            Self::new(self.features[cut * d..].to_vec(), self.labels[cut..].to_vec(), d, self.classes)?,
        ))
    }

    fn gather(&self, indices: &[usize], features: &mut Vec<f64>, labels: &mut Vec<usize>) {
        features.clear();
        labels.clear();
        for &i in indices {
            features.extend_from_slice(&self.features[i * self.dim..(i + 1) * self.dim]);
            labels.push(self.labels[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
}

impl TrainConfig {
    /// Defaults for the desk-scale network.
    pub fn desk(seed: u64) -> Self {
        Self { seed, learning_rate: 0.1, batch_size: 32, iterations: 500 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TrainOutcome {
    /// Minibatch loss of every iteration, before its update.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Minibatch SGD for `config.iterations` steps. Batches are drawn with
/// replacement from a generator seeded by `config.seed`.
pub fn train(net: &mut DenseNet, config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    if data.dim() != net.input_dim() || data.classes() != net.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dataset is {} -> {} but the network is {} -> {}",
            data.dim(),
            data.classes(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let batch = config.batch_size.min(data.len());
    let mut indices = vec![0usize; batch];
    let mut features = Vec::with_capacity(batch * data.dim());
    let mut labels = Vec::with_capacity(batch);
    let mut losses = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        indices.iter_mut().for_each(|i| *i = rng.random_range(0..data.len()));
        data.gather(&indices, &mut features, &mut labels);
        let pass = net.forward(&features, batch)?;
        let loss = pass.loss(&labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        losses.push(loss);
        let grads = net.backward(&pass, &labels)?;
        net.sgd_step(&grads, config.learning_rate)?;
        if !net.all_finite() {
            return Err(Error::Diverged { iteration });
        }
    }
    Ok(TrainOutcome { losses })
}
