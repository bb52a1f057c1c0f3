use serde::{Deserialize, Serialize};

use super::{predict_classes, GraphContext, ModelInput, ModelSpec, TrainedModel};
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::nn::{adam_step, cross_entropy, AdamConfig, AdamState};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub epoch_losses: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// 0 means the initialization was never beaten.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub record: TrainingRecord,
}

pub(crate) fn check_node_sets(n: usize, train: &[usize], val: &[usize]) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::contract(
            "train and validation sets must be non-empty",
        ));
    }
    let mut seen = vec![0u8; n];
    for (tag, set) in [(1u8, train), (2u8, val)] {
        for &v in set {
            if v >= n {
                return Err(Error::contract(format!(
                    "node {v} out of range for {n} nodes"
                )));
            }
            if seen[v] & tag != 0 {
                return Err(Error::contract(format!("node {v} listed twice")));
            }
            if seen[v] != 0 {
                return Err(Error::contract(format!(
                    "node {v} is in both train and validation"
                )));
            }
            seen[v] |= tag;
        }
    }
    Ok(())
}

/// Labels and loss mask aligned with the rows of a forward pass over `nodes`.
fn aligned_labels(
    input: &ModelInput<'_>,
    y: &LabelVector,
    nodes: &[usize],
) -> Result<(LabelVector, Vec<usize>)> {
    Ok(match input {
        ModelInput::Graph { .. } => (y.clone(), nodes.to_vec()),
        _ => (
            LabelVector::new(nodes.iter().map(|&v| y.get(v)).collect(), y.num_classes())?,
            (0..nodes.len()).collect(),
        ),
    })
}

/// Full-batch Adam on cross-entropy over `train`, early-stopped on accuracy
/// over `val` (validation loss breaks ties). Returns the parameters from the
/// best validation epoch.
pub fn train_classifier(
    spec: &ModelSpec,
    ctx: &GraphContext,
    y: &LabelVector,
    train: &[usize],
    val: &[usize],
) -> Result<TrainOutcome> {
    if y.len() != ctx.num_nodes() {
        return Err(Error::contract(format!(
            "{} labels for {} nodes",
            y.len(),
            ctx.num_nodes()
        )));
    }
    check_node_sets(ctx.num_nodes(), train, val)?;
    let mut model = TrainedModel::init(spec, ctx.num_features(), y.num_classes())?;
    let train_in = model.input(ctx, train)?;
    let val_in = model.input(ctx, val)?;
    let (train_y, train_mask) = aligned_labels(&train_in, y, train)?;
    let (val_y, val_mask) = aligned_labels(&val_in, y, val)?;

    // (accuracy, loss) on the validation set
    let evaluate = |m: &TrainedModel| -> Result<(f64, f64)> {
        let (logits, _) = m.forward(&val_in, false, None)?;
        let pred = predict_classes(&logits);
        let hits = val_mask
            .iter()
            .filter(|&&p| pred[p] == val_y.get(p))
            .count();
        let (loss, _) = cross_entropy(&logits, &val_y, &val_mask)?;
        Ok((hits as f64 / val.len() as f64, loss))
    };

    let adam = AdamConfig {
        lr: spec.lr,
        weight_decay: spec.weight_decay,
        ..AdamConfig::default()
    };
    let mut state = AdamState::for_params(&model.params);
    let mut rng = RngStream::with_stream(spec.seed, 1);
    let mut best = model.clone();
    let (acc0, mut best_loss) = evaluate(&model)?;
    let mut record = TrainingRecord {
        epoch_losses: Vec::new(),
        val_accuracy: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: acc0,
        epochs_run: 0,
    };

    for epoch in 1..=spec.max_epochs {
        let (logits, cache) = model.forward(&train_in, true, Some(&mut rng))?;
        let (loss, grad) = cross_entropy(&logits, &train_y, &train_mask)?;
        if !loss.is_finite() {
            return Err(Error::numeric(
                "train_classifier",
                format!(
                    "non-finite loss at epoch {epoch} ({} depth {}, lr {}, seed {})",
                    spec.architecture, spec.depth, spec.lr, spec.seed
                ),
            ));
        }
        let grads = model.backward(&train_in, &cache, &grad)?;
        adam_step(&mut model.params, &grads, &mut state, &adam);
        let (acc, val_loss) = evaluate(&model)?;
        record.epoch_losses.push(loss);
        record.val_accuracy.push(acc);
        record.epochs_run = epoch;
        let better = acc > record.best_val_accuracy
            || (acc == record.best_val_accuracy && val_loss < best_loss);
        if better {
            record.best_val_accuracy = acc;
            best_loss = val_loss;
            record.best_epoch = epoch;
            best = model.clone();
        } else if epoch - record.best_epoch >= spec.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        record,
    })
}
