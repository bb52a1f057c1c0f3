//! Per-node depth selection for graph neural networks.
//!
//! A family of node classifiers is trained at depths `0..=L_max`; a small
//! fusion network then learns, from structural encodings, raw features and
//! the family's logits, which depth to trust for each node. The `csbm`
//! module holds a synthetic-graph laboratory for studying how depth
//! interacts with local homophily.

pub mod checkpoint;
pub mod csbm;
pub mod encoding;
pub mod error;
pub mod graph;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scope;

pub use error::{Error, Result};
