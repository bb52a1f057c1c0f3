use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankResult {
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iter` was hit; `scores` then holds the last iterate.
    pub converged: bool,
}

/// Power iteration with uniform teleport. Rank flows along stored arcs
/// (source to destination); mass sitting on nodes without out-arcs is spread
/// uniformly.
pub fn pagerank(g: &Graph, cfg: &PageRankConfig) -> Result<PageRankResult> {
    if !(cfg.damping > 0.0 && cfg.damping < 1.0) {
        return Err(Error::config(format!(
            "pagerank damping must lie in (0, 1), got {}",
            cfg.damping
        )));
    }
    let n = g.num_nodes();
    if n == 0 {
        return Ok(PageRankResult {
            scores: vec![],
            iterations: 0,
            converged: true,
        });
    }
    let mut out_degree = vec![0usize; n];
    for &src in g.indices() {
        out_degree[src] += 1;
    }
    let inv_n = 1.0 / n as f64;
    let d = cfg.damping;
    let mut rank = vec![inv_n; n];
    let mut share = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        let mut dangling = 0.0;
        for v in 0..n {
            if out_degree[v] == 0 {
                dangling += rank[v];
                share[v] = 0.0;
            } else {
                share[v] = rank[v] / out_degree[v] as f64;
            }
        }
        let base = (1.0 - d) * inv_n + d * dangling * inv_n;
        let mut next = vec![base; n];
        for (v, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = g.neighbors(v).iter().map(|&u| share[u]).sum();
            *slot += d * inflow;
        }
        // renormalize away floating drift so the result sums to one
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|r| *r /= total);
        let change: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(PageRankResult {
        scores: rank,
        iterations,
        converged,
    })
}
