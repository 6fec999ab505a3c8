//! Neural persistence: p-norms of zeroth persistence diagrams.

use alloc::vec::Vec;

use crate::graph::{normalize_nonzero_weights, superlevel_filtration};
use crate::{Error, LayerWeights, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PersistencePair {
    pub birth: f64,
    pub death: f64,
}

impl PersistencePair {
    #[inline]
    pub fn persistence(&self) -> f64 {
        (self.death - self.birth).abs()
    }
}

/// Multiset of (birth, death) pairs, kept in filtration order.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct PersistenceDiagram {
    points: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn new(points: Vec<PersistencePair>) -> Self {
        Self { points }
    }

    #[inline]
    pub fn points(&self) -> &[PersistencePair] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl FromIterator<PersistencePair> for PersistenceDiagram {
    fn from_iter<I: IntoIterator<Item = PersistencePair>>(iter: I) -> Self {
        Self { points: iter.into_iter().collect() }
    }
}

/// Order `p >= 1` of the diagram norm.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct NormOrder(f64);

impl NormOrder {
    pub const EUCLIDEAN: NormOrder = NormOrder(2.0);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidNormOrder(p))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for NormOrder {
    fn default() -> Self {
        Self::EUCLIDEAN
    }
}

/// `(sum pers^p)^(1/p)`; 0 for an empty diagram.
pub fn neural_persistence(d: &PersistenceDiagram, p: NormOrder) -> f64 {
    let p = p.get();
    if p == 2.0 {
        let sum: f64 = d.points.iter().map(|x| x.persistence() * x.persistence()).sum();
        return libm::sqrt(sum);
    }
    let sum: f64 = d.points.iter().map(|x| libm::pow(x.persistence(), p)).sum();
    libm::pow(sum, 1.0 / p)
}

/// Neural persistence divided by its largest attainable value, `k^(1/p)` for
/// a diagram of `k` points with persistences in `[0, 1]`.
pub fn normalized_neural_persistence(d: &PersistenceDiagram, p: NormOrder) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let bound = libm::pow(d.len() as f64, 1.0 / p.get());
    (neural_persistence(d, p) / bound).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct NpReport {
    pub layer: usize,
    pub raw_np: f64,
    pub normalized_np: f64,
    pub point_count: usize,
}

impl NpReport {
    pub fn from_diagram(layer: usize, d: &PersistenceDiagram, p: NormOrder) -> Self {
        Self {
            layer,
            raw_np: neural_persistence(d, p),
            normalized_np: normalized_neural_persistence(d, p),
            point_count: d.len(),
        }
    }
}

/// Diagram of a layer, with exact zeros treated as pruned connections.
pub fn layer_diagram(w: &LayerWeights) -> PersistenceDiagram {
    superlevel_filtration(&normalize_nonzero_weights(w))
}

/// Neural persistence report for one layer.
pub fn layer_report(layer: usize, w: &LayerWeights, p: NormOrder) -> NpReport {
    NpReport::from_diagram(layer, &layer_diagram(w), p)
}

/// Sum of the per-layer raw values.
pub fn total_neural_persistence(reports: &[NpReport]) -> f64 {
    reports.iter().map(|r| r.raw_np).sum()
}
