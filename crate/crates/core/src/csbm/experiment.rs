use serde::{Deserialize, Serialize};

use super::generate::{generate_csbm, CsbmSpec};
use crate::error::{Error, Result};
use crate::graph::OperatorKind;
use crate::models::{
    accuracy, predict_classes, train_classifier, Architecture, GraphContext, ModelSpec,
};
use crate::nn::argmax;
use crate::pipeline::split_dataset;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub depths: Vec<usize>,
    /// Fraction of nodes used for training; the rest is halved into
    /// validation (early stopping) and test.
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedGap {
    pub seed: u64,
    /// Per depth, on the training set.
    pub train_accuracy: Vec<f64>,
    /// `[subgroup][depth]`, on the test nodes of that subgroup.
    pub test_accuracy: Vec<Vec<f64>>,
    /// `train_accuracy - test_accuracy`, `[subgroup][depth]`.
    pub gap: Vec<Vec<f64>>,
    /// Depth minimizing each subgroup's gap, lowest depth on ties.
    pub best_depth: Vec<usize>,
}

impl SeedGap {
    pub fn subgroups_disagree(&self) -> bool {
        self.best_depth.iter().any(|&d| d != self.best_depth[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub depths: Vec<usize>,
    pub per_seed: Vec<SeedGap>,
    pub mean_gap: Vec<Vec<f64>>,
    pub se_gap: Vec<Vec<f64>>,
    pub mean_test_accuracy: Vec<Vec<f64>>,
    pub se_test_accuracy: Vec<Vec<f64>>,
    /// Argmin of the seed-averaged gap per subgroup.
    pub best_depth_of_mean_gap: Vec<usize>,
    /// Seeds in which the subgroups' gap-minimizing depths are not all equal.
    pub seeds_with_distinct_best: usize,
}

fn argmin(v: &[f64]) -> usize {
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    argmax(&neg)
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Trains an SGC-style classifier on `(D^{-1} A)^L x` for every depth and
/// measures how the train/test gap of each subgroup moves with depth.
pub fn subgroup_gap_experiment(spec: &CsbmSpec, cfg: &GapConfig) -> Result<GapReport> {
    if cfg.depths.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::config(
            "gap experiment needs at least one depth and one seed",
        ));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::config("train fraction must lie in (0, 1)"));
    }
    let k = spec.subgroups.len();
    let max_depth = *cfg.depths.iter().max().expect("non-empty");
    let rest = (1.0 - cfg.train_fraction) / 2.0;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let sample = generate_csbm(&CsbmSpec {
            seed,
            ..spec.clone()
        })?;
        let n = sample.graph.num_nodes();
        let splits = split_dataset(n, [cfg.train_fraction, rest, rest], derive_seed(seed, 1))?;
        let ctx = GraphContext::with_operator(
            &sample.graph,
            sample.features.clone(),
            max_depth,
            OperatorKind::RowNormalized,
        )?;
        let test_by_group: Vec<Vec<usize>> = (0..k)
            .map(|m| {
                splits
                    .test
                    .iter()
                    .copied()
                    .filter(|&v| sample.subgroup[v] == m)
                    .collect()
            })
            .collect();
        if test_by_group.iter().any(Vec::is_empty) {
            return Err(Error::config(
                "a subgroup has no test nodes; increase nodes or its prior",
            ));
        }
        let mut train_accuracy = Vec::new();
        let mut test_accuracy = vec![Vec::new(); k];
        for &depth in &cfg.depths {
            let mspec = ModelSpec {
                architecture: Architecture::Sgc,
                depth,
                seed: derive_seed(seed, 2 + depth as u64),
                ..cfg.model.clone()
            };
            let out = train_classifier(&mspec, &ctx, &sample.labels, &splits.train, &splits.val)?;
            let pred = predict_classes(&out.model.logits(&ctx)?);
            train_accuracy.push(accuracy(&pred, &sample.labels, &splits.train));
            for m in 0..k {
                test_accuracy[m].push(accuracy(&pred, &sample.labels, &test_by_group[m]));
            }
        }
        let gap: Vec<Vec<f64>> = test_accuracy
            .iter()
            .map(|t| train_accuracy.iter().zip(t).map(|(a, b)| a - b).collect())
            .collect();
        let best_depth = gap.iter().map(|g| cfg.depths[argmin(g)]).collect();
        per_seed.push(SeedGap {
            seed,
            train_accuracy,
            test_accuracy,
            gap,
            best_depth,
        });
    }

    let stat = |pick: &dyn Fn(&SeedGap, usize, usize) -> f64| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut mean = vec![vec![0.0; cfg.depths.len()]; k];
        let mut se = mean.clone();
        for m in 0..k {
            for d in 0..cfg.depths.len() {
                let vals: Vec<f64> = per_seed.iter().map(|s| pick(s, m, d)).collect();
                (mean[m][d], se[m][d]) = mean_se(&vals);
            }
        }
        (mean, se)
    };
    let (mean_gap, se_gap) = stat(&|s, m, d| s.gap[m][d]);
    let (mean_test_accuracy, se_test_accuracy) = stat(&|s, m, d| s.test_accuracy[m][d]);
    let best_depth_of_mean_gap = mean_gap.iter().map(|g| cfg.depths[argmin(g)]).collect();
    let seeds_with_distinct_best = per_seed.iter().filter(|s| s.subgroups_disagree()).count();
    Ok(GapReport {
        depths: cfg.depths.clone(),
        per_seed,
        mean_gap,
        se_gap,
        mean_test_accuracy,
        se_test_accuracy,
        best_depth_of_mean_gap,
        seeds_with_distinct_best,
    })
}
