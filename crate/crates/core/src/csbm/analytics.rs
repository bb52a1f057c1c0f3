use serde::{Deserialize, Serialize};

use super::generate::{generate_csbm, CsbmSample, CsbmSpec};
use crate::error::{Error, Result};
use crate::graph::{propagate, PropagationOperator};
use crate::nn::DenseMatrix;
use crate::rng::derive_seed;

/// `means[c][m]` is the expected aggregated feature vector of class `c`,
/// subgroup `m`.
pub type MeanTable = Vec<Vec<Vec<f64>>>;

/// Expected class/subgroup means after `depth` rounds of row-normalized
/// aggregation:
/// `mu1_i(L) = p_i E_m[mu1_m(L-1)] + q_i E_m[mu2_m(L-1)]`, and the mirror
/// for class 2.
pub fn mean_recursion(spec: &CsbmSpec, depth: usize) -> MeanTable {
    let k = spec.subgroups.len();
    let mut table: MeanTable = vec![vec![spec.mu1.clone(); k], vec![spec.mu2.clone(); k]];
    for _ in 0..depth {
        let avg = |c: usize| -> Vec<f64> {
            let mut e = vec![0.0; spec.num_features()];
            for (m, s) in spec.subgroups.iter().enumerate() {
                for (ej, t) in e.iter_mut().zip(&table[c][m]) {
                    *ej += s.prior * t;
                }
            }
            e
        };
        let (e1, e2) = (avg(0), avg(1));
        table = (0..2)
            .map(|c| {
                let (same, cross) = if c == 0 { (&e1, &e2) } else { (&e2, &e1) };
                spec.subgroups
                    .iter()
                    .map(|s| {
                        same.iter()
                            .zip(cross)
                            .map(|(a, b)| s.p * a + s.q() * b)
                            .collect()
                    })
                    .collect()
            })
            .collect();
    }
    table
}

/// `E_m[p_m - q_m]^(depth - 1)`, with `0^0 = 1`.
pub fn signal_decay(spec: &CsbmSpec, depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(Error::contract("signal decay is defined for depth >= 1"));
    }
    Ok(spec.mean_homophily_difference().powi(depth as i32 - 1))
}

/// `(D^{-1} A)^depth x` on a sample.
pub fn aggregate_features(sample: &CsbmSample, depth: usize) -> Result<DenseMatrix> {
    let op = PropagationOperator::row_normalized(&sample.graph);
    let mut h = sample.features.clone();
    for _ in 0..depth {
        h = propagate(&op, &h)?;
    }
    Ok(h)
}

/// Per-(class, subgroup) means of the rows of `h`, with member counts.
pub fn group_means(
    sample: &CsbmSample,
    h: &DenseMatrix,
    num_subgroups: usize,
) -> (MeanTable, Vec<Vec<usize>>) {
    let f = h.cols();
    let mut sums = vec![vec![vec![0.0; f]; num_subgroups]; 2];
    let mut counts = vec![vec![0usize; num_subgroups]; 2];
    for v in 0..h.rows() {
        let (c, m) = (sample.labels.get(v), sample.subgroup[v]);
        counts[c][m] += 1;
        for (s, x) in sums[c][m].iter_mut().zip(h.row(v)) {
            *s += x;
        }
    }
    for c in 0..2 {
        for m in 0..num_subgroups {
            let k = counts[c][m].max(1) as f64;
            sums[c][m].iter_mut().for_each(|s| *s /= k);
        }
    }
    (sums, counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloMeans {
    pub mean: MeanTable,
    pub standard_error: MeanTable,
    pub trials: usize,
}

/// Empirical aggregated means over `trials` independent samples of `spec`
/// (trial `t` uses a seed derived from `(spec.seed, t)`). The standard error
/// is the spread of the per-trial group means over `sqrt(trials)`; node
/// features within one sample are correlated through shared neighbors, so a
/// within-sample error would be too small.
pub fn aggregate_means_mc(spec: &CsbmSpec, depth: usize, trials: usize) -> Result<MonteCarloMeans> {
    if trials < 2 {
        return Err(Error::config(
            "at least two trials are needed for a standard error",
        ));
    }
    let k = spec.subgroups.len();
    let f = spec.num_features();
    let mut per_trial: Vec<MeanTable> = Vec::with_capacity(trials);
    for t in 0..trials {
        let s = CsbmSpec {
            seed: derive_seed(spec.seed, t as u64),
            ..spec.clone()
        };
        let sample = generate_csbm(&s)?;
        let h = aggregate_features(&sample, depth)?;
        let (means, counts) = group_means(&sample, &h, k);
        if counts.iter().flatten().any(|&c| c == 0) {
            return Err(Error::config(
                "a (class, subgroup) cell is empty; increase nodes or priors",
            ));
        }
        per_trial.push(means);
    }
    let tf = trials as f64;
    let mut mean = vec![vec![vec![0.0; f]; k]; 2];
    let mut se = vec![vec![vec![0.0; f]; k]; 2];
    for c in 0..2 {
        for m in 0..k {
            for j in 0..f {
                let mu = per_trial.iter().map(|t| t[c][m][j]).sum::<f64>() / tf;
                let var = per_trial
                    .iter()
                    .map(|t| (t[c][m][j] - mu).powi(2))
                    .sum::<f64>()
                    / (tf - 1.0);
                mean[c][m][j] = mu;
                se[c][m][j] = (var / tf).sqrt();
            }
        }
    }
    Ok(MonteCarloMeans {
        mean,
        standard_error: se,
        trials,
    })
}
