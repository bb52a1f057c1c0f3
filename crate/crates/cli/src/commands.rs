use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use adascope::checkpoint::{load_tensors, read_json, save_tensors, write_json};
use adascope::csbm::{generate_csbm, signal_decay, subgroup_gap_experiment, CsbmSpec, GapConfig};
use adascope::encoding::structural_encoding;
use adascope::error::{Error, Result};
use adascope::graph::{average_node_homophily, node_homophily};
use adascope::models::{
    accuracy, predict_classes, train_classifier, train_depth_family, DepthFamily, GraphContext,
    ModelSpec,
};
use adascope::nn::{argmax, DenseMatrix};
use adascope::pipeline::{
    ensemble_baseline, export_dataset, oracle_accuracy, run_pipeline, run_splits, DataSource,
    Dataset, ExperimentConfig, Splits, StageSeeds,
};
use adascope::rng::derive_seed;
use adascope::scope::{
    build_scope_labels, load_scope_predictor, mask_uninformative, resplit, save_scope_predictor,
    select_and_predict, train_scope_predictor, ScopeData, ScopeHyper, ScopeLabelMatrix,
    SplitConfig,
};
use serde_json::json;

use crate::{Cli, Command, DataArg};

/// Deepest family any stage verb may load.
const MAX_DEPTH: usize = 8;

struct Session {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
}

impl Session {
    fn new(config: Option<&Path>, data: &DataArg, seed: Option<u64>, out: PathBuf) -> Result<Self> {
        let mut cfg = match (config, &data.data) {
            (Some(c), _) => ExperimentConfig::load(c)?,
            (None, Some(d)) => ExperimentConfig::new(DataSource::Dataset(d.clone())),
            (None, None) => return Err(Error::config("no data: pass --data or --config")),
        };
        if let Some(d) = &data.data {
            cfg.data = DataSource::Dataset(d.clone());
        }
        Ok(Self {
            cfg,
            seed: seed.unwrap_or(0),
            out,
        })
    }

    fn data(&self) -> Result<Dataset> {
        self.cfg.load_data()
    }

    fn splits(&self, data: &Dataset) -> Result<Splits> {
        run_splits(&self.cfg, data, self.seed)
    }

    fn stage_seeds(&self) -> StageSeeds {
        StageSeeds::of(self.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }

    fn context(&self, data: &Dataset) -> Result<GraphContext> {
        GraphContext::new(&data.graph, data.features.clone(), MAX_DEPTH)
    }

    fn family(&self, ctx: &GraphContext) -> Result<DepthFamily> {
        DepthFamily::load(&self.path("family"), ctx)
    }

    fn encoding(&self, n: usize) -> Result<DenseMatrix> {
        let path = self.path("encoding.json");
        let (_, mut tensors) = load_tensors(&path)?;
        let xi = tensors
            .pop()
            .filter(|t| t.rows() == n)
            .ok_or_else(|| Error::Input {
                source_name: path.display().to_string(),
                line: 0,
                message: format!("expected one {n}-row encoding matrix"),
            })?;
        Ok(xi)
    }
}

/// Prints a JSON summary to stdout; a closed pipe is not an error.
fn emit(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn labelled_nodes(splits: &Splits) -> Vec<usize> {
    let mut v: Vec<usize> = splits.train.iter().chain(&splits.val).copied().collect();
    v.sort_unstable();
    v
}

pub fn run(cli: Cli) -> Result<()> {
    let Cli {
        seed,
        out,
        config,
        command,
    } = cli;
    let config = config.as_deref();
    match command {
        Command::GenerateCsbm { spec } => generate(&spec, seed, &out),
        Command::IngestCheck(d) => ingest_check(&Session::new(config, &d, seed, out)?),
        Command::TrainGnn { data, arch, depth } => {
            let mut s = Session::new(config, &data, seed, out)?;
            if let Some(a) = arch {
                s.cfg.architecture = a;
            }
            train_gnn(&s, depth)
        }
        Command::TrainFamily { data, lmax, arch } => {
            let mut s = Session::new(config, &data, seed, out)?;
            if let Some(a) = arch {
                s.cfg.architecture = a;
            }
            if let Some(l) = lmax {
                s.cfg.l_max = l;
            }
            train_family(&s)
        }
        Command::Encode { data, lmax } => {
            let mut s = Session::new(config, &data, seed, out)?;
            if let Some(l) = lmax {
                s.cfg.l_max = l;
            }
            encode(&s)
        }
        Command::BuildLabels(d) => build_labels(&Session::new(config, &d, seed, out)?),
        Command::TrainAs {
            data,
            eta,
            inputs,
            tau,
        } => {
            let mut s = Session::new(config, &data, seed, out)?;
            if let Some(e) = eta {
                s.cfg.split.eta = e;
            }
            if let Some(m) = inputs {
                s.cfg.scope.modalities = m;
            }
            if let Some(t) = tau {
                s.cfg.scope.tau = t;
            }
            train_as(&s)
        }
        Command::PredictAs(d) => predict_as(&Session::new(config, &d, seed, out)?),
        Command::Oracle { data, ensemble } => {
            oracle(&Session::new(config, &data, seed, out)?, ensemble)
        }
        Command::Pipeline { data, seeds } => {
            let mut s = Session::new(config, &data, seed, out)?;
            if let Some(list) = seeds {
                s.cfg.seeds = list;
            } else if let Some(one) = seed {
                s.cfg.seeds = vec![one];
            }
            pipeline(s)
        }
        Command::TheoryCheck {
            spec,
            lrange,
            seeds,
            train_fraction,
        } => {
            let model = match config {
                Some(c) => ExperimentConfig::load(c)?.model,
                None => ModelSpec::default(),
            };
            theory_check(
                &spec,
                &lrange,
                seed.unwrap_or(0),
                seeds,
                train_fraction,
                model,
                &out,
            )
        }
    }
}

fn generate(spec_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec: CsbmSpec = read_json(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let sample = generate_csbm(&spec)?;
    let homophily = average_node_homophily(&sample.graph, &sample.labels);
    let data = Dataset {
        graph: sample.graph,
        features: sample.features,
        labels: sample.labels,
        split_seed: spec.seed,
    };
    let manifest = export_dataset(out, &data)?;
    let subgroups: Vec<String> = sample.subgroup.iter().map(|m| m.to_string()).collect();
    write_text(&out.join("subgroups.txt"), &(subgroups.join("\n") + "\n"))?;
    emit(&json!({
        "manifest": manifest,
        "num_nodes": data.graph.num_nodes(),
        "num_edges": data.graph.num_edges(),
        "average_homophily": homophily,
    }));
    Ok(())
}

fn ingest_check(s: &Session) -> Result<()> {
    let d = s.data()?;
    let h = node_homophily(&d.graph, &d.labels);
    emit(&json!({
        "num_nodes": d.graph.num_nodes(),
        "num_arcs": d.graph.num_arcs(),
        "directed": d.graph.is_directed(),
        "num_features": d.features.cols(),
        "num_classes": d.labels.num_classes(),
        "average_homophily": average_node_homophily(&d.graph, &d.labels),
        "isolated_nodes": h.isolated.len(),
        "split_seed": d.split_seed,
    }));
    Ok(())
}

fn train_gnn(s: &Session, depth: usize) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::config(format!("depth must not exceed {MAX_DEPTH}")));
    }
    let d = s.data()?;
    let splits = s.splits(&d)?;
    let ctx = GraphContext::new(&d.graph, d.features.clone(), depth)?;
    let spec = ModelSpec {
        architecture: s.cfg.architecture,
        depth,
        seed: derive_seed(s.stage_seeds().family, depth as u64),
        ..s.cfg.model.clone()
    };
    let outcome = train_classifier(&spec, &ctx, &d.labels, &splits.train, &splits.val)?;
    s.prepare_out()?;
    let model_path = outcome.model.save(&s.out, "model")?;
    let logits = outcome.model.logits(&ctx)?;
    let logits_path = save_tensors(
        &s.out,
        "logits",
        "logits",
        spec.seed,
        json!({}),
        &[("logits".into(), &logits)],
    )?;
    let preds = predict_classes(&logits);
    let r = &outcome.record;
    let record = json!({
        "architecture": spec.architecture,
        "depth": depth,
        "seed": spec.seed,
        "epoch_losses": r.epoch_losses,
        "val_accuracy": r.val_accuracy,
        "best_epoch": r.best_epoch,
        "best_val_accuracy": r.best_val_accuracy,
        "epochs_run": r.epochs_run,
        "train_accuracy": accuracy(&preds, &d.labels, &splits.train),
        "test_accuracy": accuracy(&preds, &d.labels, &splits.test),
        "checkpoint": model_path,
        "logits": logits_path,
    });
    write_json(&s.path("train-gnn.json"), &record)?;
    emit(&json!({
        "best_val_accuracy": r.best_val_accuracy,
        "test_accuracy": record["test_accuracy"],
        "checkpoint": model_path,
    }));
    Ok(())
}

fn train_family(s: &Session) -> Result<()> {
    s.cfg.validate()?;
    let d = s.data()?;
    let splits = s.splits(&d)?;
    let ctx = GraphContext::new(&d.graph, d.features.clone(), s.cfg.l_max)?;
    let template = ModelSpec {
        architecture: s.cfg.architecture,
        seed: s.stage_seeds().family,
        ..s.cfg.model.clone()
    };
    let fam = train_depth_family(
        &template,
        s.cfg.l_max,
        &ctx,
        &d.labels,
        &splits.train,
        &splits.val,
    )?;
    let dir = s.path("family");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    fam.save(&dir)?;
    write_json(&s.path("splits.json"), &splits)?;
    let depths: Vec<serde_json::Value> = fam
        .members
        .iter()
        .enumerate()
        .map(|(l, m)| {
            let p = fam.predictions(l);
            json!({
                "depth": l,
                "best_val_accuracy": m.record.best_val_accuracy,
                "best_epoch": m.record.best_epoch,
                "epochs_run": m.record.epochs_run,
                "epoch_losses": m.record.epoch_losses,
                "train_accuracy": accuracy(&p, &d.labels, &splits.train),
                "test_accuracy": accuracy(&p, &d.labels, &splits.test),
            })
        })
        .collect();
    write_json(
        &s.path("train-family.json"),
        &json!({ "architecture": s.cfg.architecture, "l_max": s.cfg.l_max, "depths": depths }),
    )?;
    emit(&json!({ "family": dir, "val_accuracy": fam.val_accuracy }));
    Ok(())
}

fn encode(s: &Session) -> Result<()> {
    if !(1..=MAX_DEPTH).contains(&s.cfg.l_max) {
        return Err(Error::config(format!("l_max must lie in [1, {MAX_DEPTH}]")));
    }
    let d = s.data()?;
    let enc = structural_encoding(&d.graph, &d.features, s.cfg.l_max, &s.cfg.encoding)?;
    s.prepare_out()?;
    let hyper = json!({
        "legend": enc.legend,
        "standardized": s.cfg.encoding.standardize,
        "pagerank_converged": enc.pagerank_converged,
    });
    let path = save_tensors(
        &s.out,
        "encoding",
        "structural-encoding",
        0,
        hyper,
        &[("xi".into(), &enc.features)],
    )?;
    write_json(&s.path("encoding-legend.json"), &enc.legend)?;
    emit(
        &json!({ "encoding": path, "columns": enc.legend.len(), "pagerank_converged": enc.pagerank_converged }),
    );
    Ok(())
}

fn scope_labels(d: &Dataset, fam: &DepthFamily, splits: &Splits) -> Result<ScopeLabelMatrix> {
    build_scope_labels(&d.labels, fam, &labelled_nodes(splits))
}

fn build_labels(s: &Session) -> Result<()> {
    let d = s.data()?;
    let splits = s.splits(&d)?;
    let ctx = s.context(&d)?;
    let fam = s.family(&ctx)?;
    let labels = scope_labels(&d, &fam, &splits)?;
    let k = labels.num_depths();
    let mut csv = String::from("node");
    for l in 0..k {
        write!(csv, ",d{l}").expect("string write");
    }
    csv.push('\n');
    let mut per_depth = vec![0usize; k];
    for &v in labels.nodes() {
        let row = labels.row(v).expect("listed node has a row");
        write!(csv, "{v}").expect("string write");
        for (l, &b) in row.iter().enumerate() {
            write!(csv, ",{}", u8::from(b)).expect("string write");
            per_depth[l] += usize::from(b);
        }
        csv.push('\n');
    }
    s.prepare_out()?;
    write_text(&s.path("scope-labels.csv"), &csv)?;
    let summary = json!({
        "nodes": labels.nodes().len(),
        "all_correct": labels.all_correct.len(),
        "all_wrong": labels.all_wrong.len(),
        "correct_per_depth": per_depth,
    });
    write_json(&s.path("build-labels.json"), &summary)?;
    emit(&summary);
    Ok(())
}

fn train_as(s: &Session) -> Result<()> {
    let d = s.data()?;
    let splits = s.splits(&d)?;
    let ctx = s.context(&d)?;
    let fam = s.family(&ctx)?;
    let xi = s.encoding(d.graph.num_nodes())?;
    let labels = scope_labels(&d, &fam, &splits)?;
    let seeds = s.stage_seeds();
    let split_cfg = SplitConfig {
        seed: seeds.resplit,
        ..s.cfg.split
    };
    let (train_all, val) = resplit(&splits.train, &splits.val, &split_cfg)?;
    let train = mask_uninformative(&train_all, &labels, &split_cfg)?;
    let zeta = fam.zeta();
    let data = ScopeData {
        xi: &xi,
        x: &d.features,
        zeta: &zeta,
    };
    let hp = ScopeHyper {
        seed: seeds.scope,
        ..s.cfg.scope.clone()
    };
    let preds = fam.all_predictions();
    let out = train_scope_predictor(&data, &labels, &preds, &d.labels, &train, &val, &hp)?;
    let path = save_scope_predictor(&out.params, &hp, data.widths(), &s.out, "scope")?;
    let r = &out.record;
    let record = json!({
        "eta": f64::from(split_cfg.eta),
        "inputs": hp.modalities,
        "tau": hp.tau,
        "train_nodes": train.len(),
        "masked_nodes": train_all.len() - train.len(),
        "val_nodes": val.len(),
        "best_epoch": r.best_epoch,
        "best_val_routing_accuracy": r.best_val_routing_accuracy,
        "epochs_run": r.epochs_run,
        "clamped_epochs": r.clamped_epochs,
        "epoch_losses": r.epoch_losses,
        "checkpoint": path,
    });
    write_json(&s.path("train-as.json"), &record)?;
    emit(&json!({ "checkpoint": path, "best_val_routing_accuracy": r.best_val_routing_accuracy }));
    Ok(())
}

fn predict_as(s: &Session) -> Result<()> {
    let d = s.data()?;
    let splits = s.splits(&d)?;
    let ctx = s.context(&d)?;
    let fam = s.family(&ctx)?;
    let xi = s.encoding(d.graph.num_nodes())?;
    let (params, _, widths) = load_scope_predictor(&s.path("scope.json"))?;
    let zeta = fam.zeta();
    let data = ScopeData {
        xi: &xi,
        x: &d.features,
        zeta: &zeta,
    };
    if data.widths() != widths {
        return Err(Error::config(format!(
            "predictor was trained on input widths {widths:?}, data has {:?}",
            data.widths()
        )));
    }
    let preds = fam.all_predictions();
    let routing = select_and_predict(&params, &data, &preds, &splits.test)?;
    let routed = routing.accuracy(&d.labels);
    let oracle = *oracle_accuracy(&preds, &d.labels, &splits.test)?
        .last()
        .expect("non-empty family");
    if routed > oracle {
        return Err(Error::contract("routed accuracy exceeds the oracle"));
    }
    let mut csv = String::from("node,depth,prediction,label\n");
    for ((v, dep), p) in routing
        .nodes
        .iter()
        .zip(&routing.depths)
        .zip(&routing.predictions)
    {
        writeln!(csv, "{v},{dep},{p},{}", d.labels.get(*v)).expect("string write");
    }
    write_text(&s.path("node_depths.csv"), &csv)?;
    let best_single = (0..preds.len())
        .map(|l| accuracy(&preds[l], &d.labels, &splits.test))
        .fold(f64::NEG_INFINITY, f64::max);
    let report = json!({
        "routed_accuracy": routed,
        "oracle_accuracy": oracle,
        "best_single_depth_accuracy": best_single,
        "depth_histogram": routing.histogram(preds.len()),
        "test_nodes": routing.nodes.len(),
    });
    write_json(&s.path("predict-as.json"), &report)?;
    emit(&report);
    Ok(())
}

fn oracle(s: &Session, ensemble: usize) -> Result<()> {
    let d = s.data()?;
    let splits = s.splits(&d)?;
    let ctx = s.context(&d)?;
    let fam = s.family(&ctx)?;
    let preds = fam.all_predictions();
    let curve = oracle_accuracy(&preds, &d.labels, &splits.test)?;
    let best = argmax(&fam.val_accuracy);
    let ens = if ensemble == 0 {
        Vec::new()
    } else {
        let template = fam.members[best].model.spec.clone();
        let base = s.stage_seeds().ensemble;
        let mut members = vec![preds[best].clone()];
        for i in 1..ensemble {
            let spec = ModelSpec {
                seed: derive_seed(base, i as u64),
                ..template.clone()
            };
            let out = train_classifier(&spec, &ctx, &d.labels, &splits.train, &splits.val)?;
            members.push(predict_classes(&out.model.logits(&ctx)?));
        }
        ensemble_baseline(&members, &d.labels, &splits.test)?
    };
    let mut csv = String::from("budget,oracle,ensemble\n");
    for b in 1..=curve.len().max(ens.len()) {
        let o = curve.get(b - 1).map_or(String::new(), f64::to_string);
        let e = ens.get(b - 1).map_or(String::new(), f64::to_string);
        writeln!(csv, "{b},{o},{e}").expect("string write");
    }
    s.prepare_out()?;
    write_text(&s.path("oracle.csv"), &csv)?;
    let report = json!({ "oracle_curve": curve, "ensemble_curve": ens, "best_val_depth": best });
    write_json(&s.path("oracle.json"), &report)?;
    emit(&report);
    Ok(())
}

fn pipeline(mut s: Session) -> Result<()> {
    s.cfg.output_dir = Some(s.out.clone());
    let r = run_pipeline(&s.cfg)?;
    emit(&json!({
        "report": s.out.join("report.json"),
        "routed": r.summary.routed,
        "best_single_depth": r.summary.best_single_depth,
        "best_single": r.summary.best_single,
        "oracle": r.summary.oracle_curve.last(),
    }));
    Ok(())
}

fn parse_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::config(format!("depth range `{s}` is not of the form lo:hi"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: usize = a.trim().parse().map_err(|_| bad())?;
    let hi: usize = b.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn theory_check(
    spec_path: &Path,
    lrange: &str,
    base_seed: u64,
    num_seeds: usize,
    train_fraction: f64,
    model: ModelSpec,
    out: &Path,
) -> Result<()> {
    let spec: CsbmSpec = read_json(spec_path)?;
    let depths = parse_range(lrange)?;
    let cfg = GapConfig {
        depths: depths.clone(),
        train_fraction,
        seeds: (base_seed..base_seed + num_seeds as u64).collect(),
        model,
    };
    let r = subgroup_gap_experiment(&spec, &cfg)?;
    let k = spec.subgroups.len();
    let mut csv = String::from("depth");
    for m in 0..k {
        write!(csv, ",gap_mean_{m},gap_se_{m},test_mean_{m},test_se_{m}").expect("string write");
    }
    csv.push('\n');
    for (i, l) in depths.iter().enumerate() {
        write!(csv, "{l}").expect("string write");
        for m in 0..k {
            write!(
                csv,
                ",{},{},{},{}",
                r.mean_gap[m][i],
                r.se_gap[m][i],
                r.mean_test_accuracy[m][i],
                r.se_test_accuracy[m][i]
            )
            .expect("string write");
        }
        csv.push('\n');
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("gap_curves.csv"), &csv)?;
    let decay: Vec<Option<f64>> = depths
        .iter()
        .map(|&l| signal_decay(&spec, l).ok())
        .collect();
    let verdict = json!({
        "depths": depths,
        "seeds": cfg.seeds,
        "best_depth_per_seed": r.per_seed.iter().map(|s| s.best_depth.clone()).collect::<Vec<_>>(),
        "seeds_with_distinct_best": r.seeds_with_distinct_best,
        "best_depth_of_mean_gap": r.best_depth_of_mean_gap,
        "mean_homophily_difference": spec.mean_homophily_difference(),
        "signal_decay": decay,
        "subgroups_disagree": 2 * r.seeds_with_distinct_best > num_seeds,
    });
    write_json(&out.join("theory.json"), &verdict)?;
    emit(&verdict);
    Ok(())
}
