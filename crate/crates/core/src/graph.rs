//! Bipartite layer graphs, maximum spanning forests and the super-level
//! filtration.
//!
//! Edges are always visited in descending normalized weight. Equal weights are
//! ordered by row-major flat index (`row * n + col`) ascending, so spanning
//! forests and everything derived from them (masks in particular) are
//! reproducible. The weight multiset of the forest does not depend on this
//! rule; the edge identities do.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::persistence::{PersistenceDiagram, PersistencePair};
use crate::{Error, LayerWeights, Result};

/// One weighted edge between input vertex `row` and output vertex `col`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Edge {
    pub row: usize,
    pub col: usize,
    /// Normalized weight in `[0, 1]`.
    pub weight: f64,
}

/// Which entries of a weight matrix become edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeSelection {
    /// Every entry is an edge, zeros included (the complete bipartite graph).
    #[default]
    All,
    /// Exact zeros are treated as pruned connections and dropped.
    NonZero,
}

/// A layer as a weighted bipartite graph `K_{m,n}` (or a subgraph of it).
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteLayer {
    m: usize,
    n: usize,
    edges: Vec<Edge>,
    w_max: f64,
}

impl BipartiteLayer {
    /// Builds a graph from already-normalized edges.
    pub fn new(m: usize, n: usize, edges: Vec<Edge>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::EmptyLayer { rows: m, cols: n });
        }
        let mut seen = alloc::vec![false; m * n];
        for e in &edges {
            if e.row >= m || e.col >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) out of range for {m}x{n}",
                    e.row, e.col
                )));
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) weight {} outside [0, 1]",
                    e.row, e.col, e.weight
                )));
            }
            let flat = e.row * n + e.col;
            if seen[flat] {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.row, e.col)));
            }
            seen[flat] = true;
        }
        let w_max = if edges.iter().any(|e| e.weight > 0.0) { 1.0 } else { 0.0 };
        Ok(Self { m, n, edges, w_max })
    }

    /// Normalizes `|w| / w_max` and keeps the entries picked by `selection`.
    pub fn from_weights(w: &LayerWeights, selection: EdgeSelection) -> Self {
        let (m, n) = (w.rows(), w.cols());
        let w_max = w.max_abs();
        let edges = w
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| selection == EdgeSelection::All || **v != 0.0)
            .map(|(flat, v)| Edge {
                row: flat / n,
                col: flat % n,
                weight: if w_max > 0.0 { v.abs() / w_max } else { 0.0 },
            })
            .collect();
        Self { m, n, edges, w_max }
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// The normalization constant `max |w|`.
    #[inline]
    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    /// True when every weight was zero and nothing could be normalized.
    #[inline]
    pub fn is_degenerate(&self) -> bool {
        self.w_max == 0.0
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.m + self.n
    }

    #[inline]
    pub(crate) fn flat_index(&self, e: &Edge) -> usize {
        e.row * self.n + e.col
    }

    /// Edge positions in filtration order: weight descending, flat index ascending.
    pub fn filtration_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            let (ea, eb) = (&self.edges[a], &self.edges[b]);
            match eb.weight.total_cmp(&ea.weight) {
                Ordering::Equal => self.flat_index(ea).cmp(&self.flat_index(eb)),
                ord => ord,
            }
        });
        order
    }
}

/// `|w| / max|w|` over every entry of the layer.
///
/// An all-zero layer yields all-zero edges and `w_max = 0`; check
/// [`BipartiteLayer::is_degenerate`].
pub fn normalize_weights(w: &LayerWeights) -> BipartiteLayer {
    BipartiteLayer::from_weights(w, EdgeSelection::All)
}

/// Like [`normalize_weights`] but drops exact zeros (pruned connections).
pub fn normalize_nonzero_weights(w: &LayerWeights) -> BipartiteLayer {
    BipartiteLayer::from_weights(w, EdgeSelection::NonZero)
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    components: usize,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self { parent: (0..len).collect(), size: alloc::vec![1; len], components: len }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            core::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.components -= 1;
        true
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.components
    }
}

/// A maximum spanning forest, edges listed in the order they were accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningForest {
    m: usize,
    n: usize,
    edges: Vec<Edge>,
    components_after: usize,
}

impl SpanningForest {
    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Components before any edge is added: every vertex on its own.
    #[inline]
    pub fn components_before(&self) -> usize {
        self.m + self.n
    }

    #[inline]
    pub fn components_after(&self) -> usize {
        self.components_after
    }

    /// Row-major flat indices of the forest edges in the original matrix.
    pub fn flat_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().map(move |e| e.row * self.n + e.col)
    }

    /// Forest edge weights, descending.
    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }
}

/// Kruskal on descending normalized weight.
pub fn max_spanning_forest(g: &BipartiteLayer) -> SpanningForest {
    let mut uf = UnionFind::new(g.vertex_count());
    let target = g.vertex_count() - 1;
    let mut edges = Vec::with_capacity(target.min(g.edges.len()));
    for idx in g.filtration_order() {
        let e = g.edges[idx];
        // Output vertices are numbered after the m input vertices.
        if uf.union(e.row, g.m + e.col) {
            edges.push(e);
            if edges.len() == target {
                break;
            }
        }
    }
    SpanningForest { m: g.m, n: g.n, edges, components_after: uf.components() }
}

/// Zeroth persistence diagram of the super-level filtration.
///
/// Every vertex is born at threshold 1; each edge that merges two components
/// kills one of them at its weight. The component that never dies is left out,
/// so a connected layer yields `m + n - 1` points. A degenerate (all-zero)
/// layer has births at 0 and every point lies on the diagonal.
pub fn superlevel_filtration(g: &BipartiteLayer) -> PersistenceDiagram {
    let birth = if g.is_degenerate() { 0.0 } else { 1.0 };
    let forest = max_spanning_forest(g);
    forest
        .edges()
        .iter()
        .map(|e| PersistencePair { birth, death: e.weight })
        .collect()
}
