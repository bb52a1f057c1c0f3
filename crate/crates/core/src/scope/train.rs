use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fusion::{FusionInputs, FusionParams, Modalities};
use super::labels::ScopeLabelMatrix;
use super::loss::pssc_loss;
use crate::checkpoint::{assign_parameter_tensors, load_tensors, parameter_tensors, save_tensors};
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::nn::{adam_step, argmax, AdamConfig, AdamState, DenseMatrix};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScopeHyper {
    pub hidden: usize,
    pub head_layers: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub tau: f64,
    pub modalities: Modalities,
    pub seed: u64,
}

impl Default for ScopeHyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            head_layers: 3,
            lr: 0.01,
            weight_decay: 0.0,
            max_epochs: 500,
            patience: 50,
            tau: 2.0,
            modalities: Modalities::default(),
            seed: 0,
        }
    }
}

/// Full-node predictor inputs: structural encoding, raw features and the
/// family's concatenated logits.
#[derive(Debug, Clone, Copy)]
pub struct ScopeData<'a> {
    pub xi: &'a DenseMatrix,
    pub x: &'a DenseMatrix,
    pub zeta: &'a DenseMatrix,
}

/// Rows of the inputs restricted to a node subset.
pub struct ScopeBatch {
    xi: DenseMatrix,
    x: DenseMatrix,
    zeta: DenseMatrix,
}

impl ScopeBatch {
    pub fn new(data: &ScopeData<'_>, nodes: &[usize]) -> Self {
        Self {
            xi: data.xi.select_rows(nodes),
            x: data.x.select_rows(nodes),
            zeta: data.zeta.select_rows(nodes),
        }
    }

    pub fn inputs(&self) -> FusionInputs<'_> {
        FusionInputs {
            xi: &self.xi,
            x: &self.x,
            zeta: &self.zeta,
        }
    }
}

impl ScopeData<'_> {
    pub fn widths(&self) -> [usize; 3] {
        [self.xi.cols(), self.x.cols(), self.zeta.cols()]
    }
}

/// Chosen depth and resulting class per node, in the order of `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Routing {
    pub nodes: Vec<usize>,
    pub depths: Vec<usize>,
    pub predictions: Vec<usize>,
}

impl Routing {
    pub fn accuracy(&self, y: &LabelVector) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let hits = self
            .nodes
            .iter()
            .zip(&self.predictions)
            .filter(|&(&v, &p)| y.get(v) == p)
            .count();
        hits as f64 / self.nodes.len() as f64
    }

    /// Number of nodes routed to each depth.
    pub fn histogram(&self, num_depths: usize) -> Vec<usize> {
        let mut h = vec![0; num_depths];
        for &d in &self.depths {
            h[d] += 1;
        }
        h
    }
}

/// Routes row `i` of `scores` (node `nodes[i]`) to `argmax` of its scores,
/// lowest depth on ties. `family_preds[l][v]` is the depth-`l` prediction.
pub fn route_scores(
    scores: &DenseMatrix,
    family_preds: &[Vec<usize>],
    nodes: &[usize],
) -> Result<Routing> {
    if scores.rows() != nodes.len() || scores.cols() != family_preds.len() {
        return Err(Error::contract(
            "score matrix does not match nodes and family",
        ));
    }
    let depths: Vec<usize> = (0..nodes.len()).map(|i| argmax(scores.row(i))).collect();
    let predictions = nodes
        .iter()
        .zip(&depths)
        .map(|(&v, &d)| family_preds[d][v])
        .collect();
    Ok(Routing {
        nodes: nodes.to_vec(),
        depths,
        predictions,
    })
}

/// Deterministic routing of `nodes` with a trained predictor.
pub fn select_and_predict(
    params: &FusionParams,
    data: &ScopeData<'_>,
    family_preds: &[Vec<usize>],
    nodes: &[usize],
) -> Result<Routing> {
    let batch = ScopeBatch::new(data, nodes);
    let scores = params.scores(&batch.inputs())?;
    route_scores(&scores, family_preds, nodes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeTrainingRecord {
    pub epoch_losses: Vec<f64>,
    pub val_routing_accuracy: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_routing_accuracy: f64,
    pub epochs_run: usize,
    /// Epochs in which some predicted probability hit the KL floor.
    pub clamped_epochs: usize,
}

#[derive(Debug, Clone)]
pub struct ScopeOutcome {
    pub params: FusionParams,
    pub record: ScopeTrainingRecord,
}

fn mean_loss(
    params: &FusionParams,
    batch: &ScopeBatch,
    nodes: &[usize],
    labels: &ScopeLabelMatrix,
    tau: f64,
) -> Result<f64> {
    let scores = params.scores(&batch.inputs())?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &v) in nodes.iter().enumerate() {
        if let Some(bits) = labels.row(v) {
            total += pssc_loss(bits, scores.row(i), tau, None)?.loss;
            count += 1;
        }
    }
    Ok(if count == 0 {
        0.0
    } else {
        total / count as f64
    })
}

/// Adam on the mean scope loss over `train`; keeps the parameters with the
/// best routing accuracy on `val` (noise-free loss on `val` breaks ties).
pub fn train_scope_predictor(
    data: &ScopeData<'_>,
    labels: &ScopeLabelMatrix,
    family_preds: &[Vec<usize>],
    y: &LabelVector,
    train: &[usize],
    val: &[usize],
    hp: &ScopeHyper,
) -> Result<ScopeOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::config(
            "scope predictor needs non-empty train and validation sets",
        ));
    }
    if !(hp.tau > 0.0) {
        return Err(Error::config("tau must be positive"));
    }
    let num_depths = family_preds.len();
    let rows: Vec<&[bool]> = train
        .iter()
        .map(|&v| {
            labels
                .row(v)
                .ok_or_else(|| Error::contract(format!("no scope label for training node {v}")))
        })
        .collect::<Result<_>>()?;
    let mut init_rng = RngStream::with_stream(hp.seed, 0);
    let mut params = FusionParams::init(
        hp.modalities,
        data.widths(),
        hp.hidden,
        hp.head_layers,
        num_depths,
        &mut init_rng,
    )?;
    let train_batch = ScopeBatch::new(data, train);
    let val_batch = ScopeBatch::new(data, val);
    let evaluate = |p: &FusionParams| -> Result<(f64, f64)> {
        let scores = p.scores(&val_batch.inputs())?;
        let acc = route_scores(&scores, family_preds, val)?.accuracy(y);
        Ok((acc, mean_loss(p, &val_batch, val, labels, hp.tau)?))
    };

    let adam = AdamConfig {
        lr: hp.lr,
        weight_decay: hp.weight_decay,
        ..AdamConfig::default()
    };
    let mut state = AdamState::for_params(&params);
    let mut noise_rng = RngStream::with_stream(hp.seed, 1);
    let (acc0, mut best_loss) = evaluate(&params)?;
    let mut best = params.clone();
    let mut record = ScopeTrainingRecord {
        epoch_losses: vec![],
        val_routing_accuracy: vec![],
        best_epoch: 0,
        best_val_routing_accuracy: acc0,
        epochs_run: 0,
        clamped_epochs: 0,
    };
    let inv = 1.0 / train.len() as f64;
    for epoch in 1..=hp.max_epochs {
        let inputs = train_batch.inputs();
        let (scores, cache) = params.forward(&inputs, true, None)?;
        let mut grad = DenseMatrix::zeros(scores.rows(), scores.cols());
        let mut loss = 0.0;
        let mut clamped = false;
        for (i, bits) in rows.iter().enumerate() {
            let l = pssc_loss(bits, scores.row(i), hp.tau, Some(&mut noise_rng))?;
            loss += l.loss * inv;
            clamped |= l.clamped;
            for (g, d) in grad.row_mut(i).iter_mut().zip(&l.grad) {
                *g = d * inv;
            }
        }
        if !loss.is_finite() {
            return Err(Error::numeric(
                "train_scope_predictor",
                format!(
                    "non-finite loss at epoch {epoch} (lr {}, tau {}, seed {})",
                    hp.lr, hp.tau, hp.seed
                ),
            ));
        }
        let grads = params.backward(&inputs, &cache, &grad)?;
        adam_step(&mut params, &grads, &mut state, &adam);
        let (acc, val_loss) = evaluate(&params)?;
        record.epoch_losses.push(loss);
        record.val_routing_accuracy.push(acc);
        record.epochs_run = epoch;
        record.clamped_epochs += usize::from(clamped);
        if acc > record.best_val_routing_accuracy
            || (acc == record.best_val_routing_accuracy && val_loss < best_loss)
        {
            record.best_val_routing_accuracy = acc;
            record.best_epoch = epoch;
            best_loss = val_loss;
            best = params.clone();
        } else if epoch - record.best_epoch >= hp.patience {
            break;
        }
    }
    Ok(ScopeOutcome {
        params: best,
        record,
    })
}

/// Writes a trained predictor as a checkpoint; `widths` are the input widths
/// of `xi`, `x` and `zeta` it was built for.
pub fn save_scope_predictor(
    params: &FusionParams,
    hp: &ScopeHyper,
    widths: [usize; 3],
    dir: &Path,
    stem: &str,
) -> Result<PathBuf> {
    let hyper = serde_json::json!({
        "hyper": hp,
        "widths": widths,
        "num_depths": params.num_depths(),
    });
    let tensors = parameter_tensors(params);
    let refs: Vec<(String, &DenseMatrix)> = tensors.iter().map(|(n, m)| (n.clone(), m)).collect();
    save_tensors(dir, stem, "scope-predictor", hp.seed, hyper, &refs)
}

pub fn load_scope_predictor(manifest: &Path) -> Result<(FusionParams, ScopeHyper, [usize; 3])> {
    let (man, tensors) = load_tensors(manifest)?;
    let bad = |what: &str| Error::Input {
        source_name: manifest.display().to_string(),
        line: 0,
        message: format!("checkpoint manifest lacks a valid `{what}`"),
    };
    if man.kind != "scope-predictor" {
        return Err(bad("kind"));
    }
    let h = &man.hyperparameters;
    let hp: ScopeHyper = serde_json::from_value(h["hyper"].clone()).map_err(|_| bad("hyper"))?;
    let widths: [usize; 3] =
        serde_json::from_value(h["widths"].clone()).map_err(|_| bad("widths"))?;
    let k = h["num_depths"].as_u64().ok_or_else(|| bad("num_depths"))? as usize;
    let mut rng = RngStream::with_stream(hp.seed, 0);
    let mut params = FusionParams::init(
        hp.modalities,
        widths,
        hp.hidden,
        hp.head_layers,
        k,
        &mut rng,
    )?;
    assign_parameter_tensors(&mut params, &tensors)?;
    Ok((params, hp, widths))
}
