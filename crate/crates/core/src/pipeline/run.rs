use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::accounting::{ensemble_baseline, oracle_accuracy};
use super::dataset::{ingest_dataset, Dataset};
use super::split::{split_dataset, Splits};
use crate::checkpoint::{read_json, save_tensors, write_json};
use crate::csbm::{generate_csbm, CsbmSpec};
use crate::encoding::{
    stack_from_powers, standardize_columns, structural_encoding_from_stack, EncodingConfig,
};
use crate::error::{Error, Result};
use crate::graph::{node_homophily, HomophilyScores};
use crate::models::{
    accuracy, predict_classes, train_classifier, train_depth_family, Architecture, GraphContext,
    ModelSpec,
};
use crate::nn::{argmax, DenseMatrix};
use crate::rng::derive_seed;
use crate::scope::{
    build_scope_labels, mask_uninformative, resplit, save_scope_predictor, select_and_predict,
    train_scope_predictor, Routing, ScopeData, ScopeHyper, SplitConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Path to a dataset manifest.
    Dataset(PathBuf),
    Csbm(CsbmSpec),
}

fn default_architecture() -> Architecture {
    Architecture::Sgc
}

fn default_l_max() -> usize {
    6
}

fn default_ratios() -> [f64; 3] {
    [0.5, 0.25, 0.25]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

/// One experiment: data, family architecture and depth range, splits, seeds
/// and the predictor's settings.
///
/// The `seed` fields inside `model`, `scope` and `split` are ignored; every
/// run derives its own from the entry in `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "default_architecture")]
    pub architecture: Architecture,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    #[serde(default = "default_ratios")]
    pub split_ratios: [f64; 3],
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub scope: ScopeHyper,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub standardize_features: bool,
    /// Largest ensemble in the baseline curve; `l_max + 1` when absent.
    #[serde(default)]
    pub ensemble_size: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
}

impl ExperimentConfig {
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            architecture: default_architecture(),
            l_max: default_l_max(),
            split_ratios: default_ratios(),
            seeds: default_seeds(),
            model: ModelSpec::default(),
            scope: ScopeHyper::default(),
            split: SplitConfig::default(),
            encoding: EncodingConfig::default(),
            standardize_features: false,
            ensemble_size: None,
            output_dir: None,
            save_checkpoints: true,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_json(path)?;
        if let DataSource::Dataset(p) = &mut cfg.data {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size.unwrap_or(self.l_max + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.l_max) {
            return Err(Error::config(format!(
                "l_max must lie in [1, 8], got {}",
                self.l_max
            )));
        }
        if self.split_ratios.iter().any(|&r| !(r > 0.0))
            || (self.split_ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config(format!(
                "split ratios {:?} must be positive and sum to 1",
                self.split_ratios
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.ensemble_size() == 0 {
            return Err(Error::config("ensemble size must be positive"));
        }
        if !(self.scope.tau > 0.0) {
            return Err(Error::config("tau must be positive"));
        }
        ModelSpec {
            architecture: self.architecture,
            ..self.model.clone()
        }
        .validate()?;
        match &self.data {
            DataSource::Dataset(p) if !p.is_file() => Err(Error::config(format!(
                "dataset manifest {} does not exist",
                p.display()
            ))),
            DataSource::Csbm(spec) => spec.validate(),
            _ => Ok(()),
        }
    }

    /// Reads or generates the configured data.
    pub fn load_data(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Dataset(p) => ingest_dataset(p, self.standardize_features),
            DataSource::Csbm(spec) => {
                let s = generate_csbm(spec)?;
                let features = if self.standardize_features {
                    standardize_columns(&s.features)
                } else {
                    s.features
                };
                Ok(Dataset {
                    graph: s.graph,
                    features,
                    labels: s.labels,
                    split_seed: spec.seed,
                })
            }
        }
    }
}

/// Seeds used by the stages of one run, all derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub family: u64,
    pub scope: u64,
    pub resplit: u64,
    pub ensemble: u64,
}

impl StageSeeds {
    pub fn of(run_seed: u64) -> Self {
        Self {
            family: derive_seed(run_seed, 1),
            scope: derive_seed(run_seed, 2),
            resplit: derive_seed(run_seed, 3),
            ensemble: derive_seed(run_seed, 4),
        }
    }
}

/// The train/validation/test split of run `run_seed` on `data`.
pub fn run_splits(cfg: &ExperimentConfig, data: &Dataset, run_seed: u64) -> Result<Splits> {
    split_dataset(
        data.graph.num_nodes(),
        cfg.split_ratios,
        derive_seed(data.split_seed, run_seed),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthAccuracy {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    /// Train, validation and test sizes.
    pub split_sizes: [usize; 3],
    /// Indexed by depth.
    pub depth_accuracy: Vec<DepthAccuracy>,
    /// Depth with the best validation accuracy; the ensemble replicates it.
    pub best_val_depth: usize,
    pub routed_accuracy: f64,
    /// Entry `l`: oracle accuracy over depths `0..=l` on the test set.
    pub oracle_curve: Vec<f64>,
    /// Entry `k - 1`: accuracy of the `k`-model ensemble on the test set.
    pub ensemble_curve: Vec<f64>,
    pub scope_train_nodes: usize,
    pub scope_val_nodes: usize,
    pub masked_nodes: usize,
    pub scope_best_epoch: usize,
    pub scope_epochs_run: usize,
    /// Test nodes routed to each depth.
    pub depth_histogram: Vec<usize>,
    /// Mean node homophily of the test nodes routed to each depth.
    pub routed_homophily: Vec<Option<f64>>,
    pub routing: Routing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilySummary {
    pub average: f64,
    pub min: f64,
    pub max: f64,
    pub isolated_nodes: usize,
}

impl HomophilySummary {
    fn of(h: &HomophilyScores) -> Self {
        let n = h.scores.len().max(1) as f64;
        Self {
            average: h.scores.iter().sum::<f64>() / n,
            min: h.scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: h.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            isolated_nodes: h.isolated.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub depth_test: Vec<MeanSd>,
    /// Depth with the highest mean test accuracy across seeds.
    pub best_single_depth: usize,
    pub best_single: MeanSd,
    pub routed: MeanSd,
    pub oracle_curve: Vec<MeanSd>,
    pub ensemble_curve: Vec<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub seed: Option<u64>,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub architecture: Architecture,
    pub l_max: usize,
    pub num_nodes: usize,
    pub num_classes: usize,
    pub num_features: usize,
    pub homophily: HomophilySummary,
    pub seeds: Vec<SeedMetrics>,
    pub summary: Summary,
    /// Wall-clock per stage. Written to its own file so that `report.json`
    /// is reproducible.
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl MetricsReport {
    /// Routed accuracy never exceeds the full-depth oracle and every oracle
    /// curve is non-decreasing.
    pub fn check_invariants(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::contract("report has no trials"));
        }
        for s in &self.seeds {
            let oracle = *s
                .oracle_curve
                .last()
                .ok_or_else(|| Error::contract("empty oracle curve"))?;
            if s.routed_accuracy > oracle {
                return Err(Error::contract(format!(
                    "seed {}: routed accuracy {} exceeds oracle {}",
                    s.seed, s.routed_accuracy, oracle
                )));
            }
            if s.oracle_curve.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::contract(format!(
                    "seed {}: oracle curve decreases",
                    s.seed
                )));
            }
        }
        Ok(())
    }

    fn summarize(seeds: &[SeedMetrics], l_max: usize) -> Summary {
        let column =
            |f: &dyn Fn(&SeedMetrics) -> f64| MeanSd::of(&seeds.iter().map(f).collect::<Vec<_>>());
        let depth_test: Vec<MeanSd> = (0..=l_max)
            .map(|l| column(&|s| s.depth_accuracy[l].test))
            .collect();
        let means: Vec<f64> = depth_test.iter().map(|m| m.mean).collect();
        let best = argmax(&means);
        let ens_len = seeds[0].ensemble_curve.len();
        Summary {
            best_single_depth: best,
            best_single: depth_test[best],
            depth_test,
            routed: column(&|s| s.routed_accuracy),
            oracle_curve: (0..=l_max)
                .map(|l| column(&|s| s.oracle_curve[l]))
                .collect(),
            ensemble_curve: (0..ens_len)
                .map(|k| column(&|s| s.ensemble_curve[k]))
                .collect(),
        }
    }
}

/// Shared, seed-independent inputs.
struct Prepared<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Dataset,
    ctx: GraphContext,
    xi: DenseMatrix,
    homophily: HomophilyScores,
}

fn timed<T>(
    timings: &mut Vec<StageTiming>,
    seed: Option<u64>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push(StageTiming {
        seed,
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run_seed(p: &Prepared<'_>, seed: u64, timings: &mut Vec<StageTiming>) -> Result<SeedMetrics> {
    let cfg = p.cfg;
    let y = &p.data.labels;
    let at = Some(seed);
    let seeds = StageSeeds::of(seed);
    let seed_dir = cfg
        .output_dir
        .as_ref()
        .filter(|_| cfg.save_checkpoints)
        .map(|d| d.join(format!("seed-{seed}")));

    let splits = timed(timings, at, "split", || run_splits(cfg, p.data, seed))?;

    let template = ModelSpec {
        architecture: cfg.architecture,
        seed: seeds.family,
        ..cfg.model.clone()
    };
    let family = timed(timings, at, "family", || {
        let fam = train_depth_family(&template, cfg.l_max, &p.ctx, y, &splits.train, &splits.val)?;
        if let Some(dir) = &seed_dir {
            let fdir = dir.join("family");
            create_dir(&fdir)?;
            fam.save(&fdir)?;
        }
        Ok(fam)
    })?;
    let preds = family.all_predictions();
    let depth_accuracy: Vec<DepthAccuracy> = preds
        .iter()
        .map(|pr| DepthAccuracy {
            train: accuracy(pr, y, &splits.train),
            val: accuracy(pr, y, &splits.val),
            test: accuracy(pr, y, &splits.test),
        })
        .collect();

    let labelled: Vec<usize> = {
        let mut v: Vec<usize> = splits.train.iter().chain(&splits.val).copied().collect();
        v.sort_unstable();
        v
    };
    let labels = timed(timings, at, "labels", || {
        build_scope_labels(y, &family, &labelled)
    })?;
    let split_cfg = SplitConfig {
        seed: seeds.resplit,
        ..cfg.split
    };
    let (scope_train_all, scope_val) = timed(timings, at, "resplit", || {
        resplit(&splits.train, &splits.val, &split_cfg)
    })?;
    let scope_train = timed(timings, at, "mask", || {
        mask_uninformative(&scope_train_all, &labels, &split_cfg)
    })?;

    let zeta = family.zeta();
    let scope_data = ScopeData {
        xi: &p.xi,
        x: &p.data.features,
        zeta: &zeta,
    };
    let hp = ScopeHyper {
        seed: seeds.scope,
        ..cfg.scope.clone()
    };
    let outcome = timed(timings, at, "scope-train", || {
        let out = train_scope_predictor(
            &scope_data,
            &labels,
            &preds,
            y,
            &scope_train,
            &scope_val,
            &hp,
        )?;
        if let Some(dir) = &seed_dir {
            save_scope_predictor(&out.params, &hp, scope_data.widths(), dir, "scope")?;
        }
        Ok(out)
    })?;
    let routing = timed(timings, at, "route", || {
        select_and_predict(&outcome.params, &scope_data, &preds, &splits.test)
    })?;
    let routed_accuracy = routing.accuracy(y);

    let oracle_curve = oracle_accuracy(&preds, y, &splits.test)?;
    if routed_accuracy > *oracle_curve.last().expect("family is non-empty") {
        return Err(Error::contract(format!(
            "seed {seed}: routed accuracy exceeds the oracle"
        )));
    }

    let best_val_depth = argmax(&family.val_accuracy);
    let ensemble_curve = timed(timings, at, "ensemble", || {
        let mut members = vec![preds[best_val_depth].clone()];
        let base = seeds.ensemble;
        for i in 1..cfg.ensemble_size() {
            let spec = ModelSpec {
                depth: best_val_depth,
                seed: derive_seed(base, i as u64),
                ..template.clone()
            };
            let out = train_classifier(&spec, &p.ctx, y, &splits.train, &splits.val)?;
            members.push(predict_classes(&out.model.logits(&p.ctx)?));
        }
        ensemble_baseline(&members, y, &splits.test)
    })?;

    let k = cfg.l_max + 1;
    let depth_histogram = routing.histogram(k);
    let mut h_sum = vec![0.0; k];
    for (&v, &d) in routing.nodes.iter().zip(&routing.depths) {
        h_sum[d] += p.homophily.scores[v];
    }
    let routed_homophily = h_sum
        .iter()
        .zip(&depth_histogram)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();

    Ok(SeedMetrics {
        seed,
        split_sizes: [splits.train.len(), splits.val.len(), splits.test.len()],
        depth_accuracy,
        best_val_depth,
        routed_accuracy,
        oracle_curve,
        ensemble_curve,
        scope_train_nodes: scope_train.len(),
        scope_val_nodes: scope_val.len(),
        masked_nodes: scope_train_all.len() - scope_train.len(),
        scope_best_epoch: outcome.record.best_epoch,
        scope_epochs_run: outcome.record.epochs_run,
        depth_histogram,
        routed_homophily,
        routing,
    })
}

/// Loads the configured data and runs every seed; see [`run_pipeline_on`].
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let data = timed(&mut timings, None, "ingest", || cfg.load_data())?;
    run_with_timings(cfg, &data, timings)
}

/// Per seed: split, train the depth family, label train and validation nodes
/// by which depths classify them, re-divide and mask, train the predictor,
/// route the test nodes. Seeds run on worker threads; results are collected
/// in seed order. With `output_dir` set, checkpoints and metrics are written
/// there.
pub fn run_pipeline_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<MetricsReport> {
    cfg.validate()?;
    run_with_timings(cfg, data, Vec::new())
}

fn run_with_timings(
    cfg: &ExperimentConfig,
    data: &Dataset,
    mut timings: Vec<StageTiming>,
) -> Result<MetricsReport> {
    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        write_json(&dir.join("config.json"), cfg)?;
    }
    let ctx = timed(&mut timings, None, "propagate", || {
        GraphContext::new(&data.graph, data.features.clone(), cfg.l_max)
    })?;
    let enc = timed(&mut timings, None, "encode", || {
        let stack = stack_from_powers(&data.graph, ctx.powers())?;
        structural_encoding_from_stack(&data.graph, &stack, &cfg.encoding)
    })?;
    if let Some(dir) = cfg.output_dir.as_ref().filter(|_| cfg.save_checkpoints) {
        let hyper =
            serde_json::json!({ "legend": enc.legend, "standardized": cfg.encoding.standardize });
        save_tensors(
            dir,
            "encoding",
            "structural-encoding",
            0,
            hyper,
            &[("xi".into(), &enc.features)],
        )?;
    }
    let prepared = Prepared {
        cfg,
        data,
        ctx,
        xi: enc.features,
        homophily: node_homophily(&data.graph, &data.labels),
    };

    let slots: Vec<Mutex<Option<Result<(SeedMetrics, Vec<StageTiming>)>>>> =
        cfg.seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cfg.seeds.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let mut t = Vec::new();
                let r = run_seed(&prepared, seed, &mut t).map(|m| (m, t));
                *slots[i]
                    .lock()
                    .expect("no worker panics while holding a slot") = Some(r);
            });
        }
    });
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for slot in slots {
        let (m, t) = slot
            .into_inner()
            .expect("slot lock")
            .expect("every seed ran")?;
        seeds.push(m);
        timings.extend(t);
    }

    let report = MetricsReport {
        architecture: cfg.architecture,
        l_max: cfg.l_max,
        num_nodes: data.graph.num_nodes(),
        num_classes: data.labels.num_classes(),
        num_features: data.features.cols(),
        homophily: HomophilySummary::of(&prepared.homophily),
        summary: MetricsReport::summarize(&seeds, cfg.l_max),
        seeds,
        timings,
    };
    if let Some(dir) = &cfg.output_dir {
        export_metrics(&report, dir).map_err(|e| e.in_stage("export"))?;
    }
    Ok(report)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the report under `dir`:
///
/// ```text
/// report.json       MetricsReport without timings
/// timings.json      [{seed, stage, seconds}]
/// curves.csv        depth,test_mean,test_sd,train_mean,val_mean,oracle_mean,oracle_sd,ensemble_mean,ensemble_sd
///                   one row per depth 0..=l_max; the ensemble columns of row l describe
///                   l + 1 models and are empty past the ensemble size
/// node_depths.csv   seed,node,depth,prediction
/// ```
pub fn export_metrics(report: &MetricsReport, dir: &Path) -> Result<()> {
    report.check_invariants()?;
    create_dir(dir)?;
    write_json(&dir.join("report.json"), report)?;
    write_json(&dir.join("timings.json"), &report.timings)?;

    let mut csv = String::from("depth,test_mean,test_sd,train_mean,val_mean,oracle_mean,oracle_sd,ensemble_mean,ensemble_sd\n");
    let s = &report.summary;
    for l in 0..=report.l_max {
        let train = MeanSd::of(
            &report
                .seeds
                .iter()
                .map(|m| m.depth_accuracy[l].train)
                .collect::<Vec<_>>(),
        );
        let val = MeanSd::of(
            &report
                .seeds
                .iter()
                .map(|m| m.depth_accuracy[l].val)
                .collect::<Vec<_>>(),
        );
        let (em, es) = s
            .ensemble_curve
            .get(l)
            .map_or((String::new(), String::new()), |e| {
                (e.mean.to_string(), e.sd.to_string())
            });
        writeln!(
            csv,
            "{l},{},{},{},{},{},{},{em},{es}",
            s.depth_test[l].mean,
            s.depth_test[l].sd,
            train.mean,
            val.mean,
            s.oracle_curve[l].mean,
            s.oracle_curve[l].sd
        )
        .expect("string write");
    }
    write_text(&dir.join("curves.csv"), &csv)?;

    let mut nodes = String::from("seed,node,depth,prediction\n");
    for m in &report.seeds {
        let r = &m.routing;
        for ((v, d), pr) in r.nodes.iter().zip(&r.depths).zip(&r.predictions) {
            writeln!(nodes, "{},{v},{d},{pr}", m.seed).expect("string write");
        }
    }
    write_text(&dir.join("node_depths.csv"), &nodes)
}

/// Reads back a report written by [`export_metrics`].
pub fn read_report(dir: &Path) -> Result<MetricsReport> {
    let mut report: MetricsReport = read_json(&dir.join("report.json"))?;
    let tpath = dir.join("timings.json");
    if tpath.is_file() {
        report.timings = read_json(&tpath)?;
    }
    Ok(report)
}
