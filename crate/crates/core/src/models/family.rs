use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    predict_classes, train_classifier, Architecture, GraphContext, ModelSpec, TrainedModel,
    TrainingRecord,
};
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::nn::DenseMatrix;
use crate::rng::derive_seed;

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub model: TrainedModel,
    pub record: TrainingRecord,
}

/// Classifiers at depths `0..=l_max` with their logits on every node.
#[derive(Debug, Clone)]
pub struct DepthFamily {
    pub architecture: Architecture,
    pub num_classes: usize,
    /// `logits[l]` is `n × C`, from the depth-`l` model.
    pub logits: Vec<DenseMatrix>,
    pub val_accuracy: Vec<f64>,
    /// Empty for families assembled directly from logits.
    pub members: Vec<FamilyMember>,
}

#[derive(Serialize, Deserialize)]
struct FamilyManifest {
    architecture: Architecture,
    l_max: usize,
    val_accuracy: Vec<f64>,
    models: Vec<String>,
}

impl DepthFamily {
    /// A family known only through its logits, e.g. loaded predictions or a
    /// hand-built test case.
    pub fn from_logits(architecture: Architecture, logits: Vec<DenseMatrix>) -> Result<Self> {
        let first = logits
            .first()
            .ok_or_else(|| Error::contract("empty family"))?;
        let shape = first.shape();
        if logits.iter().any(|l| l.shape() != shape) {
            return Err(Error::contract("family logits differ in shape"));
        }
        let k = logits.len();
        Ok(Self {
            architecture,
            num_classes: shape.1,
            logits,
            val_accuracy: vec![f64::NAN; k],
            members: Vec::new(),
        })
    }

    pub fn l_max(&self) -> usize {
        self.logits.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.logits[0].rows()
    }

    /// Logits of all depths side by side, block `l` from the depth-`l` model.
    pub fn zeta(&self) -> DenseMatrix {
        let refs: Vec<&DenseMatrix> = self.logits.iter().collect();
        DenseMatrix::hstack(&refs).expect("family logits share a row count")
    }

    pub fn predictions(&self, depth: usize) -> Vec<usize> {
        predict_classes(&self.logits[depth])
    }

    pub fn all_predictions(&self) -> Vec<Vec<usize>> {
        (0..self.logits.len())
            .map(|l| self.predictions(l))
            .collect()
    }

    /// Writes each member's checkpoint plus `family.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut models = Vec::new();
        for (l, m) in self.members.iter().enumerate() {
            let stem = format!("depth{l}");
            m.model.save(dir, &stem)?;
            models.push(format!("{stem}.json"));
        }
        crate::checkpoint::write_json(
            &dir.join("family.json"),
            &FamilyManifest {
                architecture: self.architecture,
                l_max: self.l_max(),
                val_accuracy: self.val_accuracy.clone(),
                models,
            },
        )
    }

    /// Reloads a saved family and recomputes its logits on `ctx`.
    pub fn load(dir: &Path, ctx: &GraphContext) -> Result<Self> {
        let man: FamilyManifest = crate::checkpoint::read_json(&dir.join("family.json"))?;
        let mut logits = Vec::new();
        let mut members = Vec::new();
        for name in &man.models {
            let model = TrainedModel::load(&dir.join(name))?;
            logits.push(model.logits(ctx)?);
            members.push(FamilyMember {
                model,
                record: TrainingRecord {
                    epoch_losses: vec![],
                    val_accuracy: vec![],
                    best_epoch: 0,
                    best_val_accuracy: f64::NAN,
                    epochs_run: 0,
                },
            });
        }
        let mut fam = Self::from_logits(man.architecture, logits)?;
        fam.val_accuracy = man.val_accuracy;
        fam.members = members;
        Ok(fam)
    }
}

/// Trains depths `0..=l_max` independently; depth `l` is seeded from
/// `(template.seed, l)`.
pub fn train_depth_family(
    template: &ModelSpec,
    l_max: usize,
    ctx: &GraphContext,
    y: &LabelVector,
    train: &[usize],
    val: &[usize],
) -> Result<DepthFamily> {
    if l_max < 1 {
        return Err(Error::config("l_max must be at least 1"));
    }
    let mut logits = Vec::with_capacity(l_max + 1);
    let mut val_accuracy = Vec::with_capacity(l_max + 1);
    let mut members = Vec::with_capacity(l_max + 1);
    for depth in 0..=l_max {
        let spec = ModelSpec {
            depth,
            seed: derive_seed(template.seed, depth as u64),
            ..template.clone()
        };
        let out = train_classifier(&spec, ctx, y, train, val)?;
        logits.push(out.model.logits(ctx)?);
        val_accuracy.push(out.record.best_val_accuracy);
        members.push(FamilyMember {
            model: out.model,
            record: out.record,
        });
    }
    Ok(DepthFamily {
        architecture: template.architecture,
        num_classes: y.num_classes(),
        logits,
        val_accuracy,
        members,
    })
}
