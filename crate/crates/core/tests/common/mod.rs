#![allow(dead_code)]

use adascope::graph::Graph;
use adascope::nn::DenseMatrix;
use adascope::rng::RngStream;

/// Erdős–Rényi style graph with edge probability `p`.
pub fn random_graph(n: usize, p: f64, directed: bool, seed: u64) -> Graph {
    let mut rng = RngStream::new(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && (directed || u < v) && rng.bernoulli(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::build(&edges, n, directed).unwrap()
}

/// Path 0-1-...-(n-1) plus random chords, so the graph is connected.
pub fn connected_graph(n: usize, extra: usize, seed: u64) -> Graph {
    let mut rng = RngStream::new(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
    for _ in 0..extra {
        let u = rng.below(n);
        let v = rng.below(n);
        edges.push((u, v));
    }
    Graph::build(&edges, n, false).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = RngStream::new(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform(-1.0, 1.0))
}

/// Dense `D̂^{-1/2}(A+I)D̂^{-1/2}` straight from the arc list.
pub fn dense_sym_operator(g: &Graph) -> DenseMatrix {
    let n = g.num_nodes();
    let mut a = DenseMatrix::identity(n);
    for (src, dst) in g.arcs() {
        a.set(dst, src, 1.0);
    }
    let d: Vec<f64> = (0..n).map(|v| (0..n).map(|u| a.get(v, u)).sum()).collect();
    DenseMatrix::from_fn(n, n, |i, j| a.get(i, j) / (d[i] * d[j]).sqrt())
}

pub fn dense_power(a: &DenseMatrix, x: &DenseMatrix, k: usize) -> DenseMatrix {
    let mut h = x.clone();
    for _ in 0..k {
        h = a.matmul(&h).unwrap();
    }
    h
}
