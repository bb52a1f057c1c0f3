//! Sparse graph storage, propagation operators, homophily and PageRank.
//!
//! Adjacency is kept in compressed-row form with one row per *destination*
//! node; the column indices of a row are that node's in-neighbors. Messages
//! therefore flow along stored arcs from source to destination, and for
//! undirected graphs every arc is stored in both directions.

mod csr;
mod homophily;
mod pagerank;

pub use csr::{propagate, CsrMatrix, OperatorKind, PropagationOperator};
pub use homophily::{average_node_homophily, node_homophily, HomophilyScores};
pub use pagerank::{pagerank, PageRankConfig, PageRankResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class id per node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::contract(format!(
                "need at least two classes, got {num_classes}"
            )));
        }
        if let Some((v, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= num_classes) {
            return Err(Error::contract(format!(
                "node {v} has label {c} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    /// Class count inferred as `max + 1` (at least 2).
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let c = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
        Self::new(labels, c)
    }

    #[inline]
    pub fn get(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Immutable unweighted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    directed: bool,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Graph {
    /// Builds a graph from `(src, dst)` pairs. Duplicate arcs and self-loops
    /// are dropped; undirected input is mirrored. Errors report the 1-based
    /// position of the offending pair.
    pub fn build(edges: &[(usize, usize)], num_nodes: usize, directed: bool) -> Result<Self> {
        let mut arcs: Vec<(usize, usize)> = Vec::with_capacity(edges.len() * 2);
        for (i, &(src, dst)) in edges.iter().enumerate() {
            for id in [src, dst] {
                if id >= num_nodes {
                    return Err(Error::Input {
                        source_name: "edge list".into(),
                        line: i + 1,
                        message: format!("node id {id} out of range [0, {num_nodes})"),
                    });
                }
            }
            if src == dst {
                continue;
            }
            // stored as (row = destination, col = source)
            arcs.push((dst, src));
            if !directed {
                arcs.push((src, dst));
            }
        }
        arcs.sort_unstable();
        arcs.dedup();

        let mut indptr = vec![0usize; num_nodes + 1];
        for &(row, _) in &arcs {
            indptr[row + 1] += 1;
        }
        for i in 0..num_nodes {
            indptr[i + 1] += indptr[i];
        }
        let indices = arcs.into_iter().map(|(_, col)| col).collect();
        Ok(Self {
            num_nodes,
            directed,
            indptr,
            indices,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored arcs (each undirected edge counts twice).
    #[inline]
    pub fn num_arcs(&self) -> usize {
        self.indices.len()
    }

    /// Edge count: arcs for directed graphs, unordered pairs otherwise.
    pub fn num_edges(&self) -> usize {
        if self.directed {
            self.num_arcs()
        } else {
            self.num_arcs() / 2
        }
    }

    #[inline]
    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// In-neighbors of `v`, sorted ascending.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.indices[self.indptr[v]..self.indptr[v + 1]]
    }

    /// In-degree (the undirected degree for undirected graphs).
    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.indptr[v + 1] - self.indptr[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|v| self.degree(v)).collect()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// All stored arcs as `(src, dst)`.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes)
            .flat_map(move |dst| self.neighbors(dst).iter().map(move |&src| (src, dst)))
    }

    /// Undirected edge list with `u < v`, one entry per edge.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .arcs()
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Undirected view. Identity on undirected graphs.
    pub fn symmetrized(&self) -> Graph {
        if !self.directed {
            return self.clone();
        }
        let arcs: Vec<(usize, usize)> = self.arcs().collect();
        Graph::build(&arcs, self.num_nodes, false).expect("ids already validated")
    }

    /// Relabels nodes: node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let arcs: Vec<(usize, usize)> = self.arcs().map(|(s, d)| (perm[s], perm[d])).collect();
        Graph::build(&arcs, self.num_nodes, self.directed).expect("permutation keeps ids in range")
    }
}
