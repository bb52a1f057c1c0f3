//! Per-node structural encoding: PageRank plus distances between a node's
//! smoothed features at each depth and (a) its raw features, (b) the fully
//! smoothed limit.
//!
//! Column order is `[pagerank, eps_bar_1..=L, eps_tilde_0..=L]`, width
//! `2(L + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{pagerank, propagate, Graph, PageRankConfig, PropagationOperator};
use crate::nn::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedStack {
    /// `levels[l] = op^l x`, `levels[0] = x`.
    pub levels: Vec<DenseMatrix>,
    pub limit: DenseMatrix,
}

impl SmoothedStack {
    pub fn l_max(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Iterated symmetric-normalized propagation up to `l_max`, plus the limit.
pub fn smoothed_stack(g: &Graph, x: &DenseMatrix, l_max: usize) -> Result<SmoothedStack> {
    if l_max < 1 {
        return Err(Error::config("l_max must be at least 1"));
    }
    let op = PropagationOperator::symmetric_normalized(g);
    let mut levels = vec![x.clone()];
    for l in 0..l_max {
        let next = propagate(&op, &levels[l])?;
        levels.push(next);
    }
    Ok(SmoothedStack {
        limit: infinite_limit(g, x)?,
        levels,
    })
}

/// Builds a stack from already propagated powers (`powers[0]` the raw features).
pub fn stack_from_powers(g: &Graph, powers: &[DenseMatrix]) -> Result<SmoothedStack> {
    let x = powers
        .first()
        .ok_or_else(|| Error::contract("no feature powers"))?;
    Ok(SmoothedStack {
        limit: infinite_limit(g, x)?,
        levels: powers.to_vec(),
    })
}

/// Rank-one closed form of the infinitely smoothed features,
/// `x_inf[v] = sqrt(d_v + 1) / (2|E| + |V|) * Σ_u sqrt(d_u + 1) x[u]`.
///
/// Directed graphs are symmetrized first. On a disconnected graph this is
/// the closed form, not the per-component limit of repeated propagation.
pub fn infinite_limit(g: &Graph, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.rows() != g.num_nodes() {
        return Err(Error::contract(format!(
            "feature matrix has {} rows, graph has {} nodes",
            x.rows(),
            g.num_nodes()
        )));
    }
    let sym;
    let g = if g.is_directed() {
        sym = g.symmetrized();
        &sym
    } else {
        g
    };
    let w: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| (d as f64 + 1.0).sqrt())
        .collect();
    let denom = (g.num_arcs() + g.num_nodes()) as f64;
    let mut pooled = vec![0.0; x.cols()];
    for (u, wu) in w.iter().enumerate() {
        for (p, xv) in pooled.iter_mut().zip(x.row(u)) {
            *p += wu * xv;
        }
    }
    Ok(DenseMatrix::from_fn(x.rows(), x.cols(), |v, j| {
        w[v] / denom * pooled[j]
    }))
}

fn row_distance(a: &DenseMatrix, b: &DenseMatrix, v: usize) -> f64 {
    a.row(v)
        .iter()
        .zip(b.row(v))
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// `(eps_bar, eps_tilde)`: `eps_bar[v][l-1] = |X^l_v - X^0_v|` for `l` in
/// `1..=L`, `eps_tilde[v][l] = |X^l_v - X^inf_v|` for `l` in `0..=L`.
pub fn smoothness(stack: &SmoothedStack) -> (DenseMatrix, DenseMatrix) {
    let n = stack.levels[0].rows();
    let l_max = stack.l_max();
    let bar = DenseMatrix::from_fn(n, l_max, |v, l| {
        row_distance(&stack.levels[l + 1], &stack.levels[0], v)
    });
    let tilde = DenseMatrix::from_fn(n, l_max + 1, |v, l| {
        row_distance(&stack.levels[l], &stack.limit, v)
    });
    (bar, tilde)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    pub pagerank: PageRankConfig,
    /// Standardize each column across nodes before it is used as model input.
    pub standardize: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            pagerank: PageRankConfig::default(),
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralEncoding {
    /// Unscaled values.
    pub raw: DenseMatrix,
    /// Model input: `raw`, column-standardized when configured.
    pub features: DenseMatrix,
    pub legend: Vec<String>,
    pub pagerank_converged: bool,
}

pub fn encoding_legend(l_max: usize) -> Vec<String> {
    let mut legend = vec!["pagerank".to_string()];
    legend.extend((1..=l_max).map(|l| format!("eps_bar_{l}")));
    legend.extend((0..=l_max).map(|l| format!("eps_tilde_{l}")));
    legend
}

/// Zero mean, unit variance per column; constant columns become zero.
pub fn standardize_columns(m: &DenseMatrix) -> DenseMatrix {
    let (n, c) = m.shape();
    let mut out = m.clone();
    for j in 0..c {
        let mean = (0..n).map(|i| m.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (m.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for i in 0..n {
            let centered = m.get(i, j) - mean;
            out.set(i, j, if sd > 1e-12 { centered / sd } else { 0.0 });
        }
    }
    out
}

pub fn structural_encoding_from_stack(
    g: &Graph,
    stack: &SmoothedStack,
    cfg: &EncodingConfig,
) -> Result<StructuralEncoding> {
    let pr = pagerank(g, &cfg.pagerank)?;
    let (bar, tilde) = smoothness(stack);
    let pi = DenseMatrix::from_vec(g.num_nodes(), 1, pr.scores)?;
    let raw = DenseMatrix::hstack(&[&pi, &bar, &tilde])?;
    let features = if cfg.standardize {
        standardize_columns(&raw)
    } else {
        raw.clone()
    };
    Ok(StructuralEncoding {
        raw,
        features,
        legend: encoding_legend(stack.l_max()),
        pagerank_converged: pr.converged,
    })
}

pub fn structural_encoding(
    g: &Graph,
    x: &DenseMatrix,
    l_max: usize,
    cfg: &EncodingConfig,
) -> Result<StructuralEncoding> {
    let stack = smoothed_stack(g, x, l_max)?;
    structural_encoding_from_stack(g, &stack, cfg)
}
