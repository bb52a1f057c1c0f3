//! Per-node depth selection: correctness labels over the depth family,
//! the predictor's own train/validation split, the fusion network and its
//! loss, and routing of nodes to their selected depth.

mod fusion;
mod labels;
mod loss;
mod train;

pub use fusion::{FusionCache, FusionInputs, FusionParams, Modalities};
pub use labels::{
    build_scope_labels, mask_uninformative, resplit, Eta, ScopeLabelMatrix, SplitConfig,
};
pub use loss::{pssc_loss, pssc_loss_with_noise, scope_target, PsscLoss};
pub use train::{
    load_scope_predictor, route_scores, save_scope_predictor, select_and_predict,
    train_scope_predictor, Routing, ScopeBatch, ScopeData, ScopeHyper, ScopeOutcome,
    ScopeTrainingRecord,
};
