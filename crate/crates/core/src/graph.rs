//! Undirected graphs over `p` labelled nodes, stored as upper-triangle bitmaps.

use serde::{Deserialize, Serialize};

/// Number of unordered node pairs for `p` nodes.
pub fn pair_count(p: usize) -> usize {
    p * (p - 1) / 2
}

/// Maps an unordered pair `(i, j)` with `i < j` to its index in upper-triangle
/// row-major order: (0,1), (0,2), ..., (0,p-1), (1,2), ...
pub fn pair_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < p);
    i * p - i * (i + 1) / 2 + (j - i - 1)
}

/// Iterates unordered pairs in index order.
pub fn pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
}

/// A simple undirected graph (no self loops).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    p: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(p: usize) -> Self {
        Adjacency {
            p,
            bits: vec![false; pair_count(p)],
        }
    }

    pub fn complete(p: usize) -> Self {
        Adjacency {
            p,
            bits: vec![true; pair_count(p)],
        }
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Adjacency::empty(p);
        for &(i, j) in edges {
            g.set(i, j, true);
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.p
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.bits[pair_index(self.p, a, b)]
    }

    pub fn set(&mut self, i: usize, j: usize, present: bool) {
        assert_ne!(i, j, "self loops are not representable");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.bits[pair_index(self.p, a, b)] = present;
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        pairs(self.p)
            .zip(self.bits.iter())
            .filter_map(|(pair, &b)| b.then_some(pair))
            .collect()
    }

    pub fn non_edges(&self) -> Vec<(usize, usize)> {
        pairs(self.p)
            .zip(self.bits.iter())
            .filter_map(|(pair, &b)| (!b).then_some(pair))
            .collect()
    }

    /// Number of edges shared with another graph on the same node set.
    pub fn overlap(&self, other: &Adjacency) -> usize {
        assert_eq!(self.p, other.p);
        self.bits
            .iter()
            .zip(other.bits.iter())
            .filter(|(&a, &b)| a && b)
            .count()
    }
}
