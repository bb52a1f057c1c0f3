use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::models::DepthFamily;
use crate::rng::RngStream;

/// Per-node record of which depths classify the node correctly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeLabelMatrix {
    nodes: Vec<usize>,
    rows: Vec<Vec<bool>>,
    index: Vec<Option<usize>>,
    pub all_correct: Vec<usize>,
    pub all_wrong: Vec<usize>,
}

impl ScopeLabelMatrix {
    /// Rows are given in the order of `nodes`; `num_nodes` bounds the ids.
    pub fn from_rows(num_nodes: usize, nodes: Vec<usize>, rows: Vec<Vec<bool>>) -> Result<Self> {
        if nodes.len() != rows.len() {
            return Err(Error::contract("one label row per node expected"));
        }
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::contract("label rows differ in width"));
        }
        let mut index = vec![None; num_nodes];
        let mut all_correct = Vec::new();
        let mut all_wrong = Vec::new();
        for (i, (&v, r)) in nodes.iter().zip(&rows).enumerate() {
            let slot = index
                .get_mut(v)
                .ok_or_else(|| Error::contract(format!("node {v} out of range")))?;
            if slot.is_some() {
                return Err(Error::contract(format!("node {v} listed twice")));
            }
            *slot = Some(i);
            if r.iter().all(|&b| b) {
                all_correct.push(v);
            } else if r.iter().all(|&b| !b) {
                all_wrong.push(v);
            }
        }
        Ok(Self {
            nodes,
            rows,
            index,
            all_correct,
            all_wrong,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn num_depths(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, node: usize) -> Option<&[bool]> {
        self.index
            .get(node)
            .copied()
            .flatten()
            .map(|i| self.rows[i].as_slice())
    }

    pub fn is_all_correct(&self, node: usize) -> bool {
        self.row(node).is_some_and(|r| r.iter().all(|&b| b))
    }

    pub fn is_all_wrong(&self, node: usize) -> bool {
        self.row(node).is_some_and(|r| r.iter().all(|&b| !b))
    }
}

/// Bit `l` of node `v` is set iff the depth-`l` model predicts `y_v`.
pub fn build_scope_labels(
    y: &LabelVector,
    family: &DepthFamily,
    nodes: &[usize],
) -> Result<ScopeLabelMatrix> {
    let n = family.num_nodes();
    if y.len() != n {
        return Err(Error::contract(
            "labels and family cover different node counts",
        ));
    }
    let preds = family.all_predictions();
    let rows = nodes
        .iter()
        .map(|&v| {
            if v >= n {
                return Err(Error::contract(format!(
                    "node {v} not covered by the family"
                )));
            }
            Ok(preds.iter().map(|p| p[v] == y.get(v)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    ScopeLabelMatrix::from_rows(n, nodes.to_vec(), rows)
}

/// Ratio used to re-divide the original train and validation sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Eta {
    /// Swap: train on the validation set, select on the training set.
    Zero,
    /// Train on 10% of the validation set, select on the other 90%.
    Tenth,
    /// Keep the original split.
    One,
}

impl TryFrom<f64> for Eta {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        if v == 0.0 {
            Ok(Eta::Zero)
        } else if v == 0.1 {
            Ok(Eta::Tenth)
        } else if v == 1.0 {
            Ok(Eta::One)
        } else {
            Err(Error::config(format!("eta must be 0, 0.1 or 1, got {v}")))
        }
    }
}

impl From<Eta> for f64 {
    fn from(e: Eta) -> f64 {
        match e {
            Eta::Zero => 0.0,
            Eta::Tenth => 0.1,
            Eta::One => 1.0,
        }
    }
}

impl std::str::FromStr for Eta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .parse()
            .map_err(|_| Error::config(format!("eta must be 0, 0.1 or 1, got `{s}`")))?;
        Eta::try_from(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub eta: Eta,
    pub mask_all_correct: bool,
    pub mask_all_wrong: bool,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            eta: Eta::Zero,
            mask_all_correct: true,
            mask_all_wrong: true,
            seed: 0,
        }
    }
}

/// Re-divides `(train, val)` into the predictor's own train and validation
/// sets. For `Eta::Tenth` the training part is `round(0.1 |val|)` nodes drawn
/// uniformly from `val`; both outputs are sorted.
pub fn resplit(
    train: &[usize],
    val: &[usize],
    cfg: &SplitConfig,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut t, mut v) = match cfg.eta {
        Eta::Zero => (val.to_vec(), train.to_vec()),
        Eta::One => (train.to_vec(), val.to_vec()),
        Eta::Tenth => {
            let mut pool = val.to_vec();
            pool.sort_unstable();
            RngStream::derive(cfg.seed, 0x5c0e).shuffle(&mut pool);
            let k = (0.1 * pool.len() as f64).round() as usize;
            let rest = pool.split_off(k);
            (pool, rest)
        }
    };
    if t.is_empty() {
        return Err(Error::config(
            "resplit left the predictor with no training nodes",
        ));
    }
    if v.is_empty() {
        return Err(Error::config(
            "resplit left the predictor with no validation nodes",
        ));
    }
    t.sort_unstable();
    v.sort_unstable();
    Ok((t, v))
}

/// Drops nodes whose label row is all ones and/or all zeros, per `cfg`.
pub fn mask_uninformative(
    nodes: &[usize],
    labels: &ScopeLabelMatrix,
    cfg: &SplitConfig,
) -> Result<Vec<usize>> {
    let kept: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|&v| {
            !(cfg.mask_all_correct && labels.is_all_correct(v)
                || cfg.mask_all_wrong && labels.is_all_wrong(v))
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::config(
            "masking removed every training node; try a different eta or disable a mask",
        ));
    }
    Ok(kept)
}
