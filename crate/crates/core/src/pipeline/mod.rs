//! End-to-end experiments: dataset files, splits, oracle and ensemble
//! accounting, the per-seed run and its metrics.

mod accounting;
mod dataset;
mod run;
mod split;

pub use accounting::{ensemble_baseline, oracle_accuracy};
pub use dataset::{export_dataset, ingest_dataset, Dataset, DatasetManifest};
pub use run::{
    export_metrics, read_report, run_pipeline, run_pipeline_on, run_splits, DataSource,
    DepthAccuracy, ExperimentConfig, HomophilySummary, MeanSd, MetricsReport, SeedMetrics,
    StageSeeds, StageTiming, Summary,
};
pub use split::{split_dataset, Splits};
