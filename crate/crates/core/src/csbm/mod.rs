//! Contextual stochastic block model with structural subgroups: a sample
//! generator, closed-form expected means under repeated mean aggregation,
//! and an experiment relating depth to per-subgroup generalization.

mod analytics;
mod experiment;
mod generate;

pub use analytics::{
    aggregate_features, aggregate_means_mc, group_means, mean_recursion, signal_decay, MeanTable,
    MonteCarloMeans,
};
pub use experiment::{subgroup_gap_experiment, GapConfig, GapReport, SeedGap};
pub use generate::{generate_csbm, CsbmSample, CsbmSpec, EdgeMode, Subgroup};
