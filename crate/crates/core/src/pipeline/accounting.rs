use crate::error::{Error, Result};
use crate::graph::LabelVector;

/// Fraction of `nodes` classified correctly by at least one of the first
/// `k` prediction vectors, for `k = 1..=preds.len()`.
fn any_correct_curve(preds: &[Vec<usize>], y: &LabelVector, nodes: &[usize]) -> Result<Vec<f64>> {
    if nodes.is_empty() {
        return Err(Error::contract("accuracy over an empty node set"));
    }
    if let Some(p) = preds.iter().find(|p| p.len() != y.len()) {
        return Err(Error::contract(format!(
            "prediction vector covers {} nodes, labels cover {}",
            p.len(),
            y.len()
        )));
    }
    let mut hit = vec![false; nodes.len()];
    let mut curve = Vec::with_capacity(preds.len());
    for p in preds {
        for (h, &v) in hit.iter_mut().zip(nodes) {
            *h |= p[v] == y.get(v);
        }
        curve.push(hit.iter().filter(|&&h| h).count() as f64 / nodes.len() as f64);
    }
    Ok(curve)
}

/// Entry `l` is the fraction of `nodes` that some depth in `0..=l` classifies
/// correctly. `family_preds[l]` holds the depth-`l` predictions for all nodes.
pub fn oracle_accuracy(
    family_preds: &[Vec<usize>],
    y: &LabelVector,
    nodes: &[usize],
) -> Result<Vec<f64>> {
    any_correct_curve(family_preds, y, nodes)
}

/// Entry `k - 1` is the fraction of `nodes` that some model among the first
/// `k` members classifies correctly.
pub fn ensemble_baseline(
    member_preds: &[Vec<usize>],
    y: &LabelVector,
    nodes: &[usize],
) -> Result<Vec<f64>> {
    any_correct_curve(member_preds, y, nodes)
}
