//! Node classifiers at a configurable depth: MLP (depth 0), SGC, GCN and a
//! hop-attention combiner, plus the trainer for a whole depth family.

mod family;
mod hop;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use family::{train_depth_family, DepthFamily, FamilyMember};
pub use hop::{hop_attention_backward, hop_attention_forward, HopAttentionParams, HopCache};
pub use train::{train_classifier, TrainOutcome, TrainingRecord};

use crate::checkpoint::{assign_parameter_tensors, load_tensors, parameter_tensors, save_tensors};
use crate::error::{Error, Result};
use crate::graph::{propagate, Graph, LabelVector, OperatorKind, PropagationOperator};
use crate::nn::{argmax, DenseMatrix, MlpCache, MlpConfig, MlpParams, Normalization, Parameters};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mlp,
    Sgc,
    Gcn,
    #[serde(rename = "hopattn", alias = "hop-attention")]
    HopAttention,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Sgc => "sgc",
            Architecture::Gcn => "gcn",
            Architecture::HopAttention => "hopattn",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Architecture::Mlp),
            "sgc" => Ok(Architecture::Sgc),
            "gcn" => Ok(Architecture::Gcn),
            "hopattn" | "hop-attention" => Ok(Architecture::HopAttention),
            other => Err(Error::config(format!(
                "unknown architecture `{other}` (expected mlp, sgc, gcn or hopattn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub depth: usize,
    pub hidden: usize,
    /// Affine layers in the MLP transformation (MLP, SGC, hop-attention head).
    pub mlp_layers: usize,
    pub norm: Normalization,
    pub dropout: f64,
    pub input_dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::Sgc,
            depth: 2,
            hidden: 64,
            mlp_layers: 3,
            norm: Normalization::None,
            dropout: 0.0,
            input_dropout: 0.0,
            lr: 0.01,
            weight_decay: 0.0,
            max_epochs: 1000,
            patience: 50,
            seed: 0,
        }
    }
}

impl ModelSpec {
    /// Depth 0 is always an MLP, whatever the nominal architecture.
    pub fn effective_architecture(&self) -> Architecture {
        if self.depth == 0 {
            Architecture::Mlp
        } else {
            self.architecture
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.mlp_layers == 0 {
            return Err(Error::config(
                "hidden width and layer count must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.input_dropout) {
            return Err(Error::config("dropout rates must lie in [0, 1)"));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::config(
                "learning rate must be positive, weight decay non-negative",
            ));
        }
        Ok(())
    }

    fn mlp_config(&self, input: usize, output: usize) -> MlpConfig {
        let mut cfg = MlpConfig::new(input, self.hidden, output, self.mlp_layers);
        cfg.norm = self.norm;
        cfg.dropout = self.dropout;
        cfg.input_dropout = self.input_dropout;
        cfg
    }

    fn gcn_config(&self, input: usize, output: usize) -> MlpConfig {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden, self.depth));
        dims.push(output);
        MlpConfig {
            dims,
            norm: self.norm,
            dropout: self.dropout,
            input_dropout: self.input_dropout,
            residual: false,
        }
    }
}

/// `op^L x` by `L` successive propagations.
pub fn sgc_precompute(
    op: &PropagationOperator,
    x: &DenseMatrix,
    depth: usize,
) -> Result<DenseMatrix> {
    let mut h = x.clone();
    for _ in 0..depth {
        h = propagate(op, &h)?;
    }
    Ok(h)
}

/// Propagation operator (symmetric-normalized unless chosen otherwise), its
/// transpose and the feature powers
/// `op^0 x ..= op^max_depth x`, shared by every model trained on one graph.
#[derive(Debug, Clone)]
pub struct GraphContext {
    op: PropagationOperator,
    op_t: PropagationOperator,
    powers: Vec<DenseMatrix>,
}

impl GraphContext {
    pub fn new(g: &Graph, x: DenseMatrix, max_depth: usize) -> Result<Self> {
        Self::with_operator(g, x, max_depth, OperatorKind::SymmetricNormalized)
    }

    pub fn with_operator(
        g: &Graph,
        x: DenseMatrix,
        max_depth: usize,
        kind: OperatorKind,
    ) -> Result<Self> {
        if x.rows() != g.num_nodes() {
            return Err(Error::contract(format!(
                "feature matrix has {} rows, graph has {} nodes",
                x.rows(),
                g.num_nodes()
            )));
        }
        let op = PropagationOperator::build(kind, g);
        let op_t = op.transposed();
        let mut powers = vec![x];
        for l in 0..max_depth {
            let next = propagate(&op, &powers[l])?;
            powers.push(next);
        }
        Ok(Self { op, op_t, powers })
    }

    pub fn operator(&self) -> &PropagationOperator {
        &self.op
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.powers[0]
    }

    pub fn num_nodes(&self) -> usize {
        self.powers[0].rows()
    }

    pub fn num_features(&self) -> usize {
        self.powers[0].cols()
    }

    pub fn max_depth(&self) -> usize {
        self.powers.len() - 1
    }

    pub fn power(&self, depth: usize) -> Result<&DenseMatrix> {
        self.powers.get(depth).ok_or_else(|| {
            Error::contract(format!(
                "depth {depth} exceeds the precomputed maximum {}",
                self.max_depth()
            ))
        })
    }

    pub fn powers(&self) -> &[DenseMatrix] {
        &self.powers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Mlp(MlpParams),
    Gcn(MlpParams),
    HopAttention(HopAttentionParams),
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            ModelParams::Mlp(p) | ModelParams::Gcn(p) => p.tensors(),
            ModelParams::HopAttention(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelParams::Mlp(p) | ModelParams::Gcn(p) => p.tensors_mut(),
            ModelParams::HopAttention(p) => p.tensors_mut(),
        }
    }
}

/// Inputs for a forward pass restricted to a node subset.
pub(crate) enum ModelInput<'a> {
    Dense(DenseMatrix),
    Hops(Vec<DenseMatrix>),
    /// Message passing always runs over the whole graph; `rows` picks the
    /// requested nodes out of the full logits.
    Graph {
        ctx: &'a GraphContext,
        rows: Vec<usize>,
    },
}

pub(crate) enum ForwardCache {
    Mlp(MlpCache),
    Hop(hop::HopCache),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub num_features: usize,
    pub num_classes: usize,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn init(spec: &ModelSpec, num_features: usize, num_classes: usize) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngStream::with_stream(spec.seed, 0);
        let params = match spec.effective_architecture() {
            Architecture::Mlp | Architecture::Sgc => ModelParams::Mlp(MlpParams::init(
                spec.mlp_config(num_features, num_classes),
                &mut rng,
            )),
            Architecture::Gcn => ModelParams::Gcn(MlpParams::init(
                spec.gcn_config(num_features, num_classes),
                &mut rng,
            )),
            Architecture::HopAttention => ModelParams::HopAttention(HopAttentionParams::init(
                spec.depth,
                num_features,
                spec.mlp_config(spec.hidden, num_classes),
                &mut rng,
            )),
        };
        Ok(Self {
            spec: spec.clone(),
            num_features,
            num_classes,
            params,
        })
    }

    pub(crate) fn input<'a>(
        &self,
        ctx: &'a GraphContext,
        nodes: &[usize],
    ) -> Result<ModelInput<'a>> {
        if ctx.num_features() != self.num_features {
            return Err(Error::contract(format!(
                "model expects {} features, context has {}",
                self.num_features,
                ctx.num_features()
            )));
        }
        let depth = self.spec.depth;
        Ok(match &self.params {
            ModelParams::Mlp(_) => ModelInput::Dense(ctx.power(depth)?.select_rows(nodes)),
            ModelParams::Gcn(_) => ModelInput::Graph {
                ctx,
                rows: nodes.to_vec(),
            },
            ModelParams::HopAttention(_) => ModelInput::Hops(
                (0..=depth)
                    .map(|l| Ok(ctx.power(l)?.select_rows(nodes)))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    pub(crate) fn forward(
        &self,
        input: &ModelInput<'_>,
        train: bool,
        rng: Option<&mut RngStream>,
    ) -> Result<(DenseMatrix, ForwardCache)> {
        match (&self.params, input) {
            (ModelParams::Mlp(p), ModelInput::Dense(x)) => {
                let (y, c) = p.forward(x, train, rng)?;
                Ok((y, ForwardCache::Mlp(c)))
            }
            (ModelParams::Gcn(p), ModelInput::Graph { ctx, .. }) => {
                let (y, c) = p.forward_propagated(&ctx.op, ctx.features(), train, rng)?;
                Ok((y, ForwardCache::Mlp(c)))
            }
            (ModelParams::HopAttention(p), ModelInput::Hops(h)) => {
                let (y, c) = p.forward(h, train, rng)?;
                Ok((y, ForwardCache::Hop(c)))
            }
            _ => Err(Error::contract(
                "model input does not match the architecture",
            )),
        }
    }

    pub(crate) fn backward(
        &self,
        input: &ModelInput<'_>,
        cache: &ForwardCache,
        grad_out: &DenseMatrix,
    ) -> Result<ModelParams> {
        match (&self.params, input, cache) {
            (ModelParams::Mlp(p), ModelInput::Dense(_), ForwardCache::Mlp(c)) => {
                Ok(ModelParams::Mlp(p.backward(c, grad_out)?.0))
            }
            (ModelParams::Gcn(p), ModelInput::Graph { ctx, .. }, ForwardCache::Mlp(c)) => Ok(
                ModelParams::Gcn(p.backward_propagated(&ctx.op_t, c, grad_out)?.0),
            ),
            (ModelParams::HopAttention(p), ModelInput::Hops(h), ForwardCache::Hop(c)) => {
                Ok(ModelParams::HopAttention(p.backward(h, c, grad_out)?))
            }
            _ => Err(Error::contract(
                "forward cache does not match the architecture",
            )),
        }
    }

    /// Inference-mode logits for `nodes`, one row per node in the given order.
    pub fn logits_for(&self, ctx: &GraphContext, nodes: &[usize]) -> Result<DenseMatrix> {
        let input = self.input(ctx, nodes)?;
        let (y, _) = self.forward(&input, false, None)?;
        Ok(match input {
            ModelInput::Graph { rows, .. } => y.select_rows(&rows),
            _ => y,
        })
    }

    /// Inference-mode logits for every node.
    pub fn logits(&self, ctx: &GraphContext) -> Result<DenseMatrix> {
        let all: Vec<usize> = (0..ctx.num_nodes()).collect();
        self.logits_for(ctx, &all)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let hyper = serde_json::json!({
            "spec": self.spec,
            "num_features": self.num_features,
            "num_classes": self.num_classes,
        });
        let tensors = parameter_tensors(&self.params);
        let refs: Vec<(String, &DenseMatrix)> =
            tensors.iter().map(|(n, m)| (n.clone(), m)).collect();
        save_tensors(dir, stem, "classifier", self.spec.seed, hyper, &refs)
    }

    /// Loads a checkpoint written by `save`. Weights round-trip at `f32` precision.
    pub fn load(manifest: &Path) -> Result<Self> {
        let (man, tensors) = load_tensors(manifest)?;
        let bad = |what: &str| Error::Input {
            source_name: manifest.display().to_string(),
            line: 0,
            message: format!("checkpoint manifest lacks a valid `{what}`"),
        };
        let h = &man.hyperparameters;
        let spec: ModelSpec = serde_json::from_value(h["spec"].clone()).map_err(|_| bad("spec"))?;
        let nf = h["num_features"]
            .as_u64()
            .ok_or_else(|| bad("num_features"))? as usize;
        let nc = h["num_classes"]
            .as_u64()
            .ok_or_else(|| bad("num_classes"))? as usize;
        let mut model = Self::init(&spec, nf, nc)?;
        assign_parameter_tensors(&mut model.params, &tensors)?;
        Ok(model)
    }
}

/// Argmax class per row, lowest class id on ties.
pub fn predict_classes(logits: &DenseMatrix) -> Vec<usize> {
    (0..logits.rows()).map(|i| argmax(logits.row(i))).collect()
}

/// Fraction of `nodes` whose prediction (indexed by node id) matches `y`.
pub fn accuracy(predictions: &[usize], y: &LabelVector, nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes
        .iter()
        .filter(|&&v| predictions[v] == y.get(v))
        .count();
    hits as f64 / nodes.len() as f64
}
