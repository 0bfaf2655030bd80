use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One time-indexed network snapshot.
///
/// Nodes are `0..n_nodes` internally; the text format is 1-indexed. Undirected
/// edges are stored once as `(u, v)` with `u < v`. Edges are kept sorted and
/// free of duplicates and self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    n_nodes: usize,
    directed: bool,
    timestamp: i64,
    edges: Vec<(u32, u32)>,
}

impl GraphSnapshot {
    pub fn new(
        n_nodes: usize,
        directed: bool,
        timestamp: i64,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidParameter("snapshot needs at least one node".into()));
        }
        let mut out = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidParameter(format!("self-loop on node {u}")));
            }
            if u as usize >= n_nodes || v as usize >= n_nodes {
                return Err(Error::InvalidParameter(format!(
                    "edge ({u}, {v}) outside 0..{n_nodes}"
                )));
            }
            if directed || u < v {
                out.push((u, v));
            } else {
                out.push((v, u));
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self { n_nodes, directed, timestamp, edges: out })
    }

    pub fn empty(n_nodes: usize, directed: bool, timestamp: i64) -> Self {
        Self { n_nodes, directed, timestamp, edges: Vec::new() }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, timestamp: i64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of observable dyads: `n(n-1)` directed, `n(n-1)/2` undirected.
    pub fn n_dyads(&self) -> u64 {
        let n = self.n_nodes as u64;
        if self.directed {
            n * (n.saturating_sub(1))
        } else {
            n * (n.saturating_sub(1)) / 2
        }
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        let key = if self.directed || u < v { (u, v) } else { (v, u) };
        self.edges.binary_search(&key).is_ok()
    }

    /// Dense 0/1 adjacency (symmetric when undirected).
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let mut adj = vec![vec![false; self.n_nodes]; self.n_nodes];
        for &(u, v) in &self.edges {
            adj[u as usize][v as usize] = true;
            if !self.directed {
                adj[v as usize][u as usize] = true;
            }
        }
        adj
    }
}

/// Hard block labels for every node of one snapshot. Labels are `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockAssignment {
    labels: Vec<u32>,
    k: usize,
}

impl BlockAssignment {
    pub fn new(labels: Vec<u32>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("block count must be >= 1".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::LabelOutOfRange { label, k });
        }
        Ok(Self { labels, k })
    }

    /// Every node in block 0.
    pub fn single_block(n_nodes: usize) -> Self {
        Self { labels: vec![0; n_nodes], k: 1 }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn block_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0u64; self.k];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Applies `mapping[old] = new` and sets the block count to `k`.
    pub fn relabel(&self, mapping: &[u32], k: usize) -> Result<Self> {
        Self::new(self.labels.iter().map(|&l| mapping[l as usize]).collect(), k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undirected_edges_are_canonical() {
        let g = GraphSnapshot::new(4, false, 1, [(2, 1), (1, 2), (0, 3)]).unwrap();
        assert_eq!(g.edges(), &[(0, 3), (1, 2)]);
        assert!(g.has_edge(3, 0));
        assert_eq!(g.n_dyads(), 6);
    }

    #[test]
    fn directed_keeps_orientation() {
        let g = GraphSnapshot::new(3, true, 0, [(2, 1), (1, 2)]).unwrap();
        assert_eq!(g.n_edges(), 2);
        assert!(!g.has_edge(0, 1));
        assert_eq!(g.n_dyads(), 6);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(GraphSnapshot::new(3, false, 0, [(1, 1)]).is_err());
        assert!(GraphSnapshot::new(3, false, 0, [(0, 3)]).is_err());
        assert!(GraphSnapshot::new(0, false, 0, []).is_err());
    }

    #[test]
    fn assignment_range_checked() {
        assert!(BlockAssignment::new(vec![0, 1, 2], 2).is_err());
        assert!(BlockAssignment::new(vec![0], 0).is_err());
        let a = BlockAssignment::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(a.block_sizes(), vec![1, 2]);
    }
}
