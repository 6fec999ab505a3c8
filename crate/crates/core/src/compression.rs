//! Topologically critical compression ratios.
//!
//! A layer keeps all of its zeroth-order topology only if the pruned layer
//! still contains its maximum spanning tree, so the largest such compression is
//! `|W| / |MST|`. For a dense `m x n` layer that is `m n / (m + n - 1)`. A
//! convolution is viewed as a sparse Toeplitz matrix between the padded input
//! pixels and the output pixels, with `f1 f2` non-zeros per output column.

use alloc::format;
use alloc::vec::Vec;

use crate::graph::{max_spanning_forest, normalize_nonzero_weights};
use crate::{Error, LayerWeights, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Conv2dSpec {
    pub spatial: [usize; 2],
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub pad: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "lowercase"))]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d(Conv2dSpec),
    Recurrent { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LayerKind {
    Dense,
    Conv2d,
    Recurrent,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Conv2d(_) => LayerKind::Conv2d,
            LayerSpec::Recurrent { .. } => LayerKind::Recurrent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dense { inputs, outputs } if inputs == 0 || outputs == 0 => Err(
                Error::InvalidLayerSpec(format!("dense layer {inputs}->{outputs} has an empty side")),
            ),
            LayerSpec::Recurrent { hidden: 0 } => {
                Err(Error::InvalidLayerSpec("recurrent layer needs at least one hidden unit".into()))
            }
            LayerSpec::Conv2d(c) => c.validate(),
            _ => Ok(()),
        }
    }
}

/// How the Toeplitz output size is derived from a convolution spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvOutputRule {
    /// `floor((s + 2 pad - f) / t) + 1` per axis.
    #[default]
    Standard,
    /// `floor((s + 2 pad - f) / t)` per axis, without the `+ 1`.
    PaperLiteral,
}

impl Conv2dSpec {
    /// 3x3 kernel, stride 1, padding 1 on a square input.
    pub fn same3x3(size: usize) -> Self {
        Self { spatial: [size, size], kernel: [3, 3], stride: [1, 1], pad: [1, 1] }
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..2 {
            let (s, f, t, p) = (self.spatial[axis], self.kernel[axis], self.stride[axis], self.pad[axis]);
            if s == 0 || f == 0 || t == 0 {
                return Err(Error::InvalidLayerSpec(format!(
                    "conv axis {axis}: spatial, kernel and stride must be >= 1"
                )));
            }
            if s + 2 * p < f {
                return Err(Error::InvalidLayerSpec(format!(
                    "conv axis {axis}: kernel {f} larger than padded input {}",
                    s + 2 * p
                )));
            }
        }
        Ok(())
    }
}

/// Input and output vertex counts of the Toeplitz graph of a convolution.
pub fn conv_toeplitz_dims(spec: &Conv2dSpec, rule: ConvOutputRule) -> Result<(usize, usize)> {
    spec.validate()?;
    let mut m = 1;
    let mut n = 1;
    for axis in 0..2 {
        let padded = spec.spatial[axis] + 2 * spec.pad[axis];
        let steps = (padded - spec.kernel[axis]) / spec.stride[axis];
        m *= padded;
        n *= match rule {
            ConvOutputRule::Standard => steps + 1,
            ConvOutputRule::PaperLiteral => steps,
        };
    }
    if n == 0 {
        return Err(Error::InvalidLayerSpec("convolution has no output positions".into()));
    }
    Ok((m, n))
}

/// `m n / (m + n - 1)`.
pub fn eta_tau_dense(m: usize, n: usize) -> f64 {
    ratio(m * n, m + n - 1)
}

/// `l^2 / (2 l - 1)`; identical to a dense `l x l` layer.
pub fn eta_tau_recurrent(hidden: usize) -> f64 {
    eta_tau_dense(hidden, hidden)
}

/// `n f1 f2 / (m + n - 1)` with `(m, n)` from [`conv_toeplitz_dims`].
pub fn eta_tau_conv(spec: &Conv2dSpec, rule: ConvOutputRule) -> Result<f64> {
    let c = layer_counts(&LayerSpec::Conv2d(*spec), rule)?;
    Ok(ratio(c.0, c.1))
}

#[inline]
fn ratio(weights: usize, mst: usize) -> f64 {
    weights as f64 / mst as f64
}

/// `(|W|, |MST|)` for a layer spec.
pub fn layer_counts(spec: &LayerSpec, rule: ConvOutputRule) -> Result<(usize, usize)> {
    spec.validate()?;
    Ok(match *spec {
        LayerSpec::Dense { inputs, outputs } => (inputs * outputs, inputs + outputs - 1),
        LayerSpec::Recurrent { hidden } => (hidden * hidden, 2 * hidden - 1),
        LayerSpec::Conv2d(c) => {
            let (m, n) = conv_toeplitz_dims(&c, rule)?;
            (n * c.kernel[0] * c.kernel[1], m + n - 1)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArchSpec {
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyArchitecture);
        }
        for l in &layers {
            l.validate()?;
        }
        Ok(Self { layers })
    }

    /// Dense stack `dims[0] -> dims[1] -> ...`.
    pub fn dense_stack(dims: &[usize]) -> Result<Self> {
        Self::new(
            dims.windows(2)
                .map(|w| LayerSpec::Dense { inputs: w[0], outputs: w[1] })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerCompression {
    pub layer: usize,
    pub kind: LayerKind,
    pub weight_count: usize,
    pub mst_count: usize,
    pub eta_tau: f64,
}

/// Aggregate over all layers of one kind.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct KindCompression {
    pub kind: LayerKind,
    pub layers: usize,
    pub weight_count: usize,
    pub mst_count: usize,
    pub eta_tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CompressionReport {
    pub layers: Vec<LayerCompression>,
    pub by_kind: Vec<KindCompression>,
    pub total_weights: usize,
    pub total_mst: usize,
    pub final_eta_tau: f64,
}

/// Per-layer ratios and the network ratio `sum |W_k| / sum |MST_k|`.
///
/// A multi-channel convolution is counted as a single channel pair.
pub fn eta_tau_network(arch: &ArchSpec, rule: ConvOutputRule) -> Result<CompressionReport> {
    if arch.layers.is_empty() {
        return Err(Error::EmptyArchitecture);
    }
    let layers = arch
        .layers
        .iter()
        .enumerate()
        .map(|(layer, spec)| {
            let (weight_count, mst_count) = layer_counts(spec, rule)?;
            Ok(LayerCompression {
                layer,
                kind: spec.kind(),
                weight_count,
                mst_count,
                eta_tau: ratio(weight_count, mst_count),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut by_kind: Vec<KindCompression> = Vec::new();
    for l in &layers {
        match by_kind.iter_mut().find(|k| k.kind == l.kind) {
            Some(k) => {
                k.layers += 1;
                k.weight_count += l.weight_count;
                k.mst_count += l.mst_count;
            }
            None => by_kind.push(KindCompression {
                kind: l.kind,
                layers: 1,
                weight_count: l.weight_count,
                mst_count: l.mst_count,
                eta_tau: 0.0,
            }),
        }
    }
    by_kind.sort_by_key(|k| k.kind);
    for k in &mut by_kind {
        k.eta_tau = ratio(k.weight_count, k.mst_count);
    }

    let total_weights = layers.iter().map(|l| l.weight_count).sum();
    let total_mst = layers.iter().map(|l| l.mst_count).sum();
    Ok(CompressionReport {
        layers,
        by_kind,
        total_weights,
        total_mst,
        final_eta_tau: ratio(total_weights, total_mst),
    })
}

/// Non-zero weight count over the size of the actual maximum spanning forest.
pub fn eta_tau_empirical(w: &LayerWeights) -> Result<f64> {
    let g = normalize_nonzero_weights(w);
    if g.is_degenerate() {
        return Err(Error::DegenerateLayer);
    }
    let forest = max_spanning_forest(&g);
    Ok(ratio(g.edges().len(), forest.len()))
}

/// Rounds to `places` decimals, ties to even.
pub fn round_half_even(x: f64, places: u32) -> f64 {
    let scale = libm::pow(10.0, places as f64);
    let scaled = x * scale;
    let floor = libm::floor(scaled);
    let diff = scaled - floor;
    let up = diff > 0.5 || (diff == 0.5 && libm::fmod(floor, 2.0) != 0.0);
    let rounded = if up { floor + 1.0 } else { floor };
    rounded / scale
}
