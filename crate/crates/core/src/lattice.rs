//! Multitime domain geometry.
//!
//! The evolution parameter is a point t = (t^1, ..., t^m) in the closed
//! positive orthant, ordered componentwise. Domains are boxes fixed by two
//! diagonally opposite corners, and solvers discretize them with uniform
//! lattices swept by diagonal level (the sum of the index components).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A multitime point: m nonnegative coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTime(Vec<f64>);

impl MultiTime {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidDomain("multitime needs at least one axis".into()));
        }
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidDomain(format!(
                "multitime coordinates must be finite and nonnegative, got {coords:?}"
            )));
        }
        Ok(MultiTime(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Componentwise (product-order) comparison: `self <= other`.
    pub fn le(&self, other: &MultiTime) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

/// An axis-aligned box `lo <= t <= hi` in the product order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBox {
    lo: MultiTime,
    hi: MultiTime,
}

impl TimeBox {
    pub fn new(lo: MultiTime, hi: MultiTime) -> Result<Self> {
        if !lo.le(&hi) {
            return Err(Error::InvalidDomain(format!(
                "box corners must satisfy lo <= hi componentwise: lo={:?} hi={:?}",
                lo.coords(),
                hi.coords()
            )));
        }
        Ok(TimeBox { lo, hi })
    }

    pub fn from_corners(lo: &[f64], hi: &[f64]) -> Result<Self> {
        TimeBox::new(MultiTime::new(lo.to_vec())?, MultiTime::new(hi.to_vec())?)
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn lo(&self) -> &[f64] {
        self.lo.coords()
    }

    pub fn hi(&self) -> &[f64] {
        self.hi.coords()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi.coords()[axis] - self.lo.coords()[axis]
    }

    /// Product of side lengths.
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.side(a)).product()
    }
}

/// Volume of the box spanned by two comparable corner points, each given
/// as a raw coordinate slice. Zero-extent axes give volume zero.
pub fn span_volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| b - a).product()
}

/// Uniform discretization of a [`TimeBox`] with `steps[axis]` cells per
/// axis, hence `steps[axis] + 1` nodes per axis.
///
/// Nodes are addressed either by multi-index `k` (one component per axis,
/// `0 <= k[a] <= steps[a]`) or by a linear index in ascending
/// lexicographic order of the multi-index (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeLattice {
    domain: TimeBox,
    steps: Vec<usize>,
    spacing: Vec<f64>,
}

impl TimeLattice {
    pub fn new(domain: TimeBox, steps: Vec<usize>) -> Result<Self> {
        if steps.len() != domain.dim() {
            return Err(Error::InvalidDomain(format!(
                "lattice steps have dimension {} but the box has dimension {}",
                steps.len(),
                domain.dim()
            )));
        }
        if steps.contains(&0) {
            return Err(Error::InvalidDomain("lattice needs at least one cell per axis".into()));
        }
        let spacing = steps
            .iter()
            .enumerate()
            .map(|(a, &s)| domain.side(a) / s as f64)
            .collect();
        Ok(TimeLattice { domain, steps, spacing })
    }

    pub fn dim(&self) -> usize {
        self.steps.len()
    }

    pub fn domain(&self) -> &TimeBox {
        &self.domain
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Number of nodes, Π (steps + 1).
    pub fn node_count(&self) -> usize {
        self.steps.iter().map(|&s| s + 1).product()
    }

    /// Number of cells, Π steps.
    pub fn cell_count(&self) -> usize {
        self.steps.iter().product()
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim());
        let mut idx = 0;
        for (a, &k) in multi.iter().enumerate() {
            debug_assert!(k <= self.steps[a]);
            idx = idx * (self.steps[a] + 1) + k;
        }
        idx
    }

    pub fn node_multi(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0usize; self.dim()];
        for a in (0..self.dim()).rev() {
            let w = self.steps[a] + 1;
            multi[a] = idx % w;
            idx /= w;
        }
        multi
    }

    /// Coordinates of a node.
    pub fn node_coords(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(a, &k)| self.domain.lo()[a] + k as f64 * self.spacing[a])
            .collect()
    }

    /// Diagonal level of a node: the sum of its index components.
    pub fn level(&self, multi: &[usize]) -> usize {
        multi.iter().sum()
    }

    pub fn max_level(&self) -> usize {
        self.steps.iter().sum()
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &c) in multi.iter().enumerate() {
            debug_assert!(c < self.steps[a]);
            idx = idx * self.steps[a] + c;
        }
        idx
    }

    pub fn cell_multi(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0usize; self.dim()];
        for a in (0..self.dim()).rev() {
            multi[a] = idx % self.steps[a];
            idx /= self.steps[a];
        }
        multi
    }

    /// Center coordinates of a cell.
    pub fn cell_center(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(a, &c)| self.domain.lo()[a] + (c as f64 + 0.5) * self.spacing[a])
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// The cell whose controls govern the edge leaving `node` along `axis`.
    ///
    /// The edge from `node` to `node + e_axis` spans cell index `node[axis]`
    /// on its own axis; transverse components are clamped to the last cell
    /// so nodes on far faces still map to a cell.
    pub fn edge_cell(&self, node: &[usize], axis: usize) -> Vec<usize> {
        node.iter()
            .enumerate()
            .map(|(a, &k)| if a == axis { k } else { k.min(self.steps[a] - 1) })
            .collect()
    }

    /// Volume of the remaining box from a node to the far corner T.
    pub fn tail_volume(&self, multi: &[usize]) -> f64 {
        multi
            .iter()
            .enumerate()
            .map(|(a, &k)| (self.steps[a] - k) as f64 * self.spacing[a])
            .product()
    }

    /// All node linear indices grouped by diagonal level, emitted from the
    /// maximum level (the single node T) down to level 0 (the node 0).
    /// Within a level, nodes appear in ascending lexicographic order of
    /// their multi-index.
    pub fn diagonal_levels(&self) -> Vec<Vec<usize>> {
        let mut levels = vec![Vec::new(); self.max_level() + 1];
        for idx in 0..self.node_count() {
            let multi = self.node_multi(idx);
            levels[self.level(&multi)].push(idx);
        }
        // Linear index order is lexicographic order of the multi-index.
        levels.reverse();
        levels
    }
}

/// Axis preference when building monotone paths or choosing integration
/// predecessors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisPolicy {
    /// Exhaust axis 0 first, then axis 1, and so on.
    LowestFirst,
    /// Exhaust the last axis first.
    HighestFirst,
}

/// A product-order monotone chain of lattice nodes, each step incrementing
/// exactly one index component by one.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePath {
    nodes: Vec<Vec<usize>>,
}

impl LatticePath {
    pub fn nodes(&self) -> &[Vec<usize>] {
        &self.nodes
    }

    /// Number of edges: the sum of the index gaps between the endpoints.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds the monotone path from `a` to `b` that increments axes in the
/// order given by `policy`.
pub fn monotone_path(a: &[usize], b: &[usize], policy: AxisPolicy) -> Result<LatticePath> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x > y) {
        return Err(Error::NotComparable(format!("{a:?} is not <= {b:?}")));
    }
    let mut nodes = vec![a.to_vec()];
    let mut cur = a.to_vec();
    let axes: Vec<usize> = match policy {
        AxisPolicy::LowestFirst => (0..a.len()).collect(),
        AxisPolicy::HighestFirst => (0..a.len()).rev().collect(),
    };
    for axis in axes {
        while cur[axis] < b[axis] {
            cur[axis] += 1;
            nodes.push(cur.clone());
        }
    }
    Ok(LatticePath { nodes })
}
