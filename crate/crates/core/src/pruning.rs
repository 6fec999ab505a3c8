//! Pruning masks, IMP schedules and the iterative prune/retrain loop.
//!
//! Everything here scores weights locally, one layer at a time. Magnitude
//! pruning (MP) keeps the largest `|w|`. Topological pruning (T-IMP) first keeps
//! the maximum spanning tree of the layer graph and fills the rest of the
//! budget by magnitude, which leaves the zeroth persistence diagram of the
//! layer unchanged.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{max_spanning_forest, normalize_weights};
use crate::persistence::{layer_report, total_neural_persistence, NormOrder};
use crate::trainer::DenseNet;
use crate::{Error, LayerWeights, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum MaskMethod {
    #[cfg_attr(feature = "serde", serde(rename = "MP"))]
    Magnitude,
    #[cfg_attr(feature = "serde", serde(rename = "TIMP"))]
    Topological,
}

/// Binary keep-mask aligned with a weight matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
    nnz: usize,
    method: MaskMethod,
    truncated: bool,
}

impl PruneMask {
    /// Mask keeping exactly the given row-major flat indices.
    pub fn from_indices(
        rows: usize,
        cols: usize,
        kept: impl IntoIterator<Item = usize>,
        method: MaskMethod,
    ) -> Result<Self> {
        let mut bits = vec![false; rows * cols];
        for i in kept {
            let slot = bits.get_mut(i).ok_or_else(|| {
                Error::DimensionMismatch(format!("mask index {i} outside {rows}x{cols}"))
            })?;
            *slot = true;
        }
        Ok(Self::from_bits(rows, cols, bits, method))
    }

    fn from_bits(rows: usize, cols: usize, bits: Vec<bool>, method: MaskMethod) -> Self {
        let nnz = bits.iter().filter(|b| **b).count();
        Self { rows, cols, bits, nnz, method, truncated: false }
    }

    /// Mask from bytes, non-zero meaning kept.
    pub fn from_bytes(rows: usize, cols: usize, bytes: &[u8], method: MaskMethod) -> Result<Self> {
        if bytes.len() != rows * cols {
            return Err(Error::ShapeMismatch { expected: rows * cols, actual: bytes.len() });
        }
        Ok(Self::from_bits(rows, cols, bytes.iter().map(|b| *b != 0).collect(), method))
    }

    pub fn full(rows: usize, cols: usize, method: MaskMethod) -> Self {
        Self::from_bits(rows, cols, vec![true; rows * cols], method)
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.nnz
    }

    #[inline]
    pub fn method(&self) -> MaskMethod {
        self.method
    }

    /// True for a T-IMP mask that had to drop spanning-tree edges.
    #[inline]
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    #[inline]
    pub fn is_kept(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| b as u8).collect()
    }

    /// True when every weight kept here is also kept by `other`.
    pub fn is_subset_of(&self, other: &PruneMask) -> bool {
        self.shape() == other.shape() && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    pub(crate) fn apply_in_place(&self, values: &mut [f64]) {
        for (v, keep) in values.iter_mut().zip(&self.bits) {
            if !keep {
                *v = 0.0;
            }
        }
    }

    /// `M ⊙ W`.
    pub fn apply(&self, w: &LayerWeights) -> Result<LayerWeights> {
        if (w.rows(), w.cols()) != self.shape() {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} applied to {}x{} weights",
                self.rows,
                self.cols,
                w.rows(),
                w.cols()
            )));
        }
        let mut values = w.values().to_vec();
        self.apply_in_place(&mut values);
        LayerWeights::new(w.rows(), w.cols(), values)
    }
}

/// Flat indices ordered by `|w|` descending, ties by index ascending.
pub fn magnitude_order(w: &LayerWeights) -> Vec<usize> {
    normalize_weights(w).filtration_order()
}

fn check_keep(w: &LayerWeights, keep: usize) -> Result<()> {
    if keep > w.len() {
        return Err(Error::KeepTooLarge { keep, size: w.len() });
    }
    Ok(())
}

/// Keeps the `keep` largest-magnitude weights of the layer.
pub fn magnitude_mask(w: &LayerWeights, keep: usize) -> Result<PruneMask> {
    check_keep(w, keep)?;
    let order = magnitude_order(w);
    PruneMask::from_indices(w.rows(), w.cols(), order.into_iter().take(keep), MaskMethod::Magnitude)
}

/// Keeps the maximum spanning tree, then the largest remaining weights.
///
/// `keep` below the tree size `alpha` is rejected unless `truncate` is set, in
/// which case the `keep` tree edges with the largest persistence (smallest
/// normalized weight) are kept and the mask is marked truncated.
pub fn timp_mask(w: &LayerWeights, keep: usize, truncate: bool) -> Result<PruneMask> {
    check_keep(w, keep)?;
    let g = normalize_weights(w);
    let forest = max_spanning_forest(&g);
    let alpha = forest.len();
    let (rows, cols) = (w.rows(), w.cols());

    if keep < alpha {
        if !truncate {
            return Err(Error::KeepBelowSpanningTree { keep, alpha });
        }
        // Smallest tree weights first, ties by ascending flat index.
        let mut edges: Vec<(f64, usize)> =
            forest.edges().iter().map(|e| (e.weight, e.row * cols + e.col)).collect();
        edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut mask = PruneMask::from_indices(
            rows,
            cols,
            edges.into_iter().take(keep).map(|(_, i)| i),
            MaskMethod::Topological,
        )?;
        mask.truncated = true;
        return Ok(mask);
    }

    let mut bits = vec![false; rows * cols];
    for i in forest.flat_indices() {
        bits[i] = true;
    }
    let mut remaining = keep - alpha;
    for i in g.filtration_order() {
        if remaining == 0 {
            break;
        }
        if !bits[i] {
            bits[i] = true;
            remaining -= 1;
        }
    }
    Ok(PruneMask::from_bits(rows, cols, bits, MaskMethod::Topological))
}

/// Spanning tree vs top-`alpha` weights of one layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OverlapReport {
    pub layer: usize,
    pub alpha: usize,
    pub overlap_count: usize,
    /// `overlap_count / alpha`.
    pub fraction: f64,
    /// Normalized weights of the spanning tree, descending.
    pub mst_weights: Vec<f64>,
    /// Normalized weights of the top-`alpha` set, descending.
    pub top_alpha_weights: Vec<f64>,
}

/// Fraction of the `alpha = |MST|` largest weights that lie in the maximum
/// spanning tree, on the complete layer graph.
pub fn measure_overlap(w: &LayerWeights) -> Result<OverlapReport> {
    let g = normalize_weights(w);
    if g.is_degenerate() {
        return Err(Error::DegenerateLayer);
    }
    let forest = max_spanning_forest(&g);
    let alpha = forest.len();
    let mut in_forest = vec![false; w.len()];
    for i in forest.flat_indices() {
        in_forest[i] = true;
    }
    let top: Vec<usize> = g.filtration_order().into_iter().take(alpha).collect();
    let overlap_count = top.iter().filter(|&&i| in_forest[i]).count();
    let edges = g.edges();
    Ok(OverlapReport {
        layer: 0,
        alpha,
        overlap_count,
        fraction: overlap_count as f64 / alpha as f64,
        mst_weights: forest.weights(),
        top_alpha_weights: top.iter().map(|&i| edges[i].weight).collect(),
    })
}

/// How each round's removal is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RemovalBase {
    /// Every round removes `p / N` percent of the original parameter count.
    #[default]
    Original,
    /// Every round removes the same fraction of the weights still present,
    /// chosen so that round `N` reaches the target.
    Remaining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Infeasibility {
    pub layer: usize,
    pub round: usize,
    pub keep: usize,
    pub alpha: usize,
}

impl From<Infeasibility> for Error {
    fn from(i: Infeasibility) -> Self {
        Error::InfeasibleSchedule { layer: i.layer, round: i.round, keep: i.keep, alpha: i.alpha }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ImpSchedule {
    pub target_sparsity_percent: f64,
    pub rounds: usize,
    pub iterations_per_round: usize,
    pub base: RemovalBase,
    pub shapes: Vec<(usize, usize)>,
    /// `keep_counts[r][k]`: weights of layer `k` kept after round `r + 1`.
    pub keep_counts: Vec<Vec<usize>>,
    /// Rounds where a layer drops below its spanning tree size.
    pub infeasible: Vec<Infeasibility>,
}

impl ImpSchedule {
    /// Kept weights of `layer` after `round` (1-based); round 0 is the dense layer.
    pub fn keep(&self, round: usize, layer: usize) -> usize {
        if round == 0 {
            let (r, c) = self.shapes[layer];
            r * c
        } else {
            self.keep_counts[round - 1][layer]
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.infeasible.is_empty()
    }
}

// Guards ceil() against representation error such as 100 * 0.7 = 70.00000000000001.
const CEIL_SLACK: f64 = 1e-9;

/// Per-layer keep counts for `rounds` rounds reaching `sparsity_percent`.
///
/// With [`RemovalBase::Original`], round `r` keeps
/// `ceil(count * (1 - r p / (100 N)))`.
pub fn build_imp_schedule(
    shapes: &[(usize, usize)],
    sparsity_percent: f64,
    rounds: usize,
    iterations_per_round: usize,
    base: RemovalBase,
) -> Result<ImpSchedule> {
    if !(0.0..100.0).contains(&sparsity_percent) {
        return Err(Error::InvalidSchedule(format!(
            "target sparsity must be in [0, 100), got {sparsity_percent}"
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidSchedule("at least one round is required".into()));
    }
    if iterations_per_round == 0 {
        return Err(Error::InvalidSchedule("at least one training iteration per round is required".into()));
    }
    if shapes.is_empty() || shapes.iter().any(|&(r, c)| r == 0 || c == 0) {
        return Err(Error::InvalidSchedule("every layer needs a non-empty shape".into()));
    }

    let p = sparsity_percent / 100.0;
    let mut keep_counts = Vec::with_capacity(rounds);
    let mut infeasible = Vec::new();
    for round in 1..=rounds {
        let fraction_kept = match base {
            RemovalBase::Original => 1.0 - p * round as f64 / rounds as f64,
            RemovalBase::Remaining => libm::pow(1.0 - p, round as f64 / rounds as f64),
        };
        let counts: Vec<usize> = shapes
            .iter()
            .enumerate()
            .map(|(layer, &(r, c))| {
                let exact = (r * c) as f64 * fraction_kept;
                let keep = (libm::ceil(exact - CEIL_SLACK * exact.max(1.0)) as usize).min(r * c);
                let alpha = r + c - 1;
                if keep < alpha {
                    infeasible.push(Infeasibility { layer, round, keep, alpha });
                }
                keep
            })
            .collect();
        keep_counts.push(counts);
    }
    Ok(ImpSchedule {
        target_sparsity_percent: sparsity_percent,
        rounds,
        iterations_per_round,
        base,
        shapes: shapes.to_vec(),
        keep_counts,
        infeasible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PruneLoop {
    Imp,
    Timp,
}

/// Losses reported by the training callback of [`run_iterative`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TrainSummary {
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerRoundMetrics {
    pub layer: usize,
    pub keep: usize,
    /// Neural persistence of the trained weights entering the round.
    pub np_before_mask: f64,
    /// ... after this round's mask is applied.
    pub np_after_mask: f64,
    /// ... after retraining under the mask.
    pub np_after_train: f64,
    pub normalized_np_after_train: f64,
    /// Spanning tree / top-`alpha` overlap of the weights entering the round.
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RoundMetrics {
    pub round: usize,
    pub kept_weights: usize,
    /// Fraction of weights removed, relative to the dense network.
    pub sparsity: f64,
    pub total_np: f64,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub layers: Vec<LayerRoundMetrics>,
}

/// Train, then repeatedly mask and retrain.
///
/// Round 0 trains the dense network. Each round `r = 1..=N` computes masks
/// from the current weights with the schedule's keep counts, installs them
/// on `net` and calls `train(net, r)`, which must keep masked weights at zero.
/// A T-IMP loop with an infeasible schedule fails before any training.
pub fn run_iterative<F>(
    kind: PruneLoop,
    net: &mut DenseNet,
    schedule: &ImpSchedule,
    p: NormOrder,
    mut train: F,
) -> Result<Vec<RoundMetrics>>
where
    F: FnMut(&mut DenseNet, usize) -> Result<TrainSummary>,
{
    if net.weight_shapes() != schedule.shapes {
        return Err(Error::DimensionMismatch(format!(
            "schedule shapes {:?} do not match network {:?}",
            schedule.shapes,
            net.weight_shapes()
        )));
    }
    if kind == PruneLoop::Timp {
        if let Some(first) = schedule.infeasible.first() {
            return Err((*first).into());
        }
    }

    let total = net.weight_count();
    let mut out = Vec::with_capacity(schedule.rounds + 1);
    for round in 0..=schedule.rounds {
        let mut layers = Vec::with_capacity(net.layers().len());
        for (k, l) in net.layers().iter().enumerate() {
            layers.push(LayerRoundMetrics {
                layer: k,
                keep: schedule.keep(round, k),
                np_before_mask: layer_report(k, &l.weights, p).raw_np,
                np_after_mask: 0.0,
                np_after_train: 0.0,
                normalized_np_after_train: 0.0,
                overlap: measure_overlap(&l.weights).map(|o| o.fraction).unwrap_or(0.0),
            });
        }

        if round > 0 {
            let masks = net
                .layers()
                .iter()
                .enumerate()
                .map(|(k, l)| {
                    let keep = schedule.keep(round, k);
                    match kind {
                        PruneLoop::Imp => magnitude_mask(&l.weights, keep),
                        PruneLoop::Timp => timp_mask(&l.weights, keep, false),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            net.set_masks(masks)?;
        }
        for (m, l) in layers.iter_mut().zip(net.layers()) {
            m.np_after_mask = layer_report(m.layer, &l.weights, p).raw_np;
        }

        let summary = train(net, round)?;

        let reports = net.layer_reports(p);
        for (m, r) in layers.iter_mut().zip(&reports) {
            m.np_after_train = r.raw_np;
            m.normalized_np_after_train = r.normalized_np;
        }
        let kept: usize = layers.iter().map(|m| m.keep).sum();
        out.push(RoundMetrics {
            round,
            kept_weights: kept,
            sparsity: 1.0 - kept as f64 / total as f64,
            total_np: total_neural_persistence(&reports),
            train_loss: summary.train_loss,
            validation_loss: summary.validation_loss,
            layers,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kept(mask: &PruneMask) -> Vec<(usize, usize)> {
        let (r, c) = mask.shape();
        (0..r * c).filter(|&i| mask.bits()[i]).map(|i| (i / c, i % c)).collect()
    }

    #[test]
    fn magnitude_mask_keeps_largest() {
        let w = LayerWeights::from_rows(&[[3.0, -1.0], [2.0, 0.5]]).unwrap();
        let m = magnitude_mask(&w, 2).unwrap();
        assert_eq!(kept(&m), vec![(0, 0), (1, 0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(magnitude_mask(&w, 4).unwrap().nnz(), 4);
        assert_eq!(magnitude_mask(&w, 0).unwrap().nnz(), 0);
        assert_eq!(magnitude_mask(&w, 5), Err(Error::KeepTooLarge { keep: 5, size: 4 }));
    }

    #[test]
    fn magnitude_ties_keep_lower_index() {
        let w = LayerWeights::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(kept(&magnitude_mask(&w, 2).unwrap()), vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn timp_equals_tree_at_alpha() {
        let w = LayerWeights::from_rows(&[[1.0, 0.5], [0.25, 0.75]]).unwrap();
        let m = timp_mask(&w, 3, false).unwrap();
        assert_eq!(kept(&m), vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(m.method(), MaskMethod::Topological);
        assert_eq!(kept(&magnitude_mask(&w, 3).unwrap()), vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(timp_mask(&w, 4, false).unwrap().nnz(), 4);
    }

    #[test]
    fn timp_differs_from_magnitude() {
        // Any three edges of K_{2,2} form a spanning tree, so both methods agree.
        let w = LayerWeights::from_rows(&[[1.0, 0.4], [0.45, 0.75]]).unwrap();
        let tree = kept(&timp_mask(&w, 3, false).unwrap());
        assert_eq!(tree, vec![(0, 0), (1, 0), (1, 1)]);
        assert_eq!(tree, kept(&magnitude_mask(&w, 3).unwrap()));

        // Top-4 by magnitude closes the cycle r0-c0-r1-c1 and never reaches row 2.
        let w = LayerWeights::from_rows(&[[1.0, 0.99], [0.98, 0.97], [0.01, 0.02]]).unwrap();
        let tree = kept(&timp_mask(&w, 4, false).unwrap());
        let mag = kept(&magnitude_mask(&w, 4).unwrap());
        assert_eq!(mag, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(tree, vec![(0, 0), (0, 1), (1, 0), (2, 1)]);

        // With one slot to spare T-IMP adds the largest non-tree weight.
        let tree = kept(&timp_mask(&w, 5, false).unwrap());
        assert_eq!(tree, vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 1)]);
    }

    #[test]
    fn timp_below_alpha() {
        let w = LayerWeights::from_rows(&[[1.0, 0.5], [0.25, 0.75]]).unwrap();
        assert_eq!(timp_mask(&w, 2, false), Err(Error::KeepBelowSpanningTree { keep: 2, alpha: 3 }));
        let m = timp_mask(&w, 2, true).unwrap();
        assert!(m.is_truncated());
        // Largest persistence = smallest tree weights 0.5 and 0.75.
        assert_eq!(kept(&m), vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn overlap_examples() {
        let w = LayerWeights::new(1, 6, vec![0.3, 0.1, -0.9, 0.2, 0.5, 0.7]).unwrap();
        let r = measure_overlap(&w).unwrap();
        assert_eq!((r.alpha, r.fraction), (6, 1.0));

        let w = LayerWeights::from_rows(&[[1.0, 0.5], [0.25, 0.75]]).unwrap();
        let r = measure_overlap(&w).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert_eq!(r.mst_weights, vec![1.0, 0.75, 0.5]);
        assert_eq!(r.top_alpha_weights, vec![1.0, 0.75, 0.5]);

        let w = LayerWeights::from_rows(&[[1.0, 0.99], [0.98, 0.97], [0.01, 0.02]]).unwrap();
        let r = measure_overlap(&w).unwrap();
        assert_eq!((r.alpha, r.overlap_count), (4, 3));
        assert_eq!(r.fraction, 0.75);

        assert_eq!(measure_overlap(&LayerWeights::zeros(2, 3).unwrap()), Err(Error::DegenerateLayer));
    }

    #[test]
    fn schedule_arithmetic() {
        let s = build_imp_schedule(&[(10, 10)], 90.0, 1, 5, RemovalBase::Original).unwrap();
        assert_eq!(s.keep_counts, vec![vec![10]]);
        let s = build_imp_schedule(&[(10, 10)], 90.0, 3, 5, RemovalBase::Original).unwrap();
        assert_eq!(s.keep_counts, vec![vec![70], vec![40], vec![10]]);
        assert_eq!(s.keep(0, 0), 100);
        // alpha = 19 > 10
        assert_eq!(s.infeasible, vec![Infeasibility { layer: 0, round: 3, keep: 10, alpha: 19 }]);

        let s = build_imp_schedule(&[(10, 10)], 0.0, 1, 5, RemovalBase::Original).unwrap();
        assert_eq!(s.keep_counts, vec![vec![100]]);
        assert!(s.is_feasible());

        let s = build_imp_schedule(&[(10, 10)], 75.0, 2, 1, RemovalBase::Remaining).unwrap();
        assert_eq!(s.keep_counts, vec![vec![50], vec![25]]);
    }

    #[test]
    fn schedule_validation() {
        let shapes = [(4, 4)];
        assert!(build_imp_schedule(&shapes, 100.0, 1, 1, RemovalBase::Original).is_err());
        assert!(build_imp_schedule(&shapes, -1.0, 1, 1, RemovalBase::Original).is_err());
        assert!(build_imp_schedule(&shapes, 50.0, 0, 1, RemovalBase::Original).is_err());
        assert!(build_imp_schedule(&shapes, 50.0, 1, 0, RemovalBase::Original).is_err());
        assert!(build_imp_schedule(&[], 50.0, 1, 1, RemovalBase::Original).is_err());
    }

    #[test]
    fn apply_zeroes_pruned_entries() {
        let w = LayerWeights::from_rows(&[[3.0, -1.0], [2.0, 0.5]]).unwrap();
        let m = magnitude_mask(&w, 2).unwrap();
        assert_eq!(m.apply(&w).unwrap().values(), &[3.0, 0.0, 2.0, 0.0]);
        assert!(m.apply(&LayerWeights::zeros(1, 4).unwrap()).is_err());
        assert_eq!(m.to_bytes(), vec![1, 0, 1, 0]);
        let back = PruneMask::from_bytes(2, 2, &m.to_bytes(), MaskMethod::Magnitude).unwrap();
        assert_eq!(back, m);
    }
}
