//! Node-adaptive hop weighting: each hop representation gets a scalar score
//! from a shared linear map, scores are softmax-normalized per node, and the
//! hops are averaged with those weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    dot, softmax, softmax_backward, DenseMatrix, Linear, MlpCache, MlpConfig, MlpParams, Parameters,
};
use crate::rng::RngStream;

/// Combines `hops[l]` (each `n × w`) with per-node weights
/// `alpha[v] = softmax_l(hops[l][v] · score)`. Returns `(combined, alpha)`,
/// `alpha` being `n × hops.len()`.
pub fn hop_attention_forward(
    hops: &[DenseMatrix],
    score: &[f64],
) -> Result<(DenseMatrix, DenseMatrix)> {
    let first = hops
        .first()
        .ok_or_else(|| Error::contract("no hop representations"))?;
    let (n, w) = first.shape();
    if hops.iter().any(|h| h.shape() != (n, w)) {
        return Err(Error::contract("hop representations differ in shape"));
    }
    if score.len() != w {
        return Err(Error::contract("score vector width does not match hops"));
    }
    let k = hops.len();
    let mut alpha = DenseMatrix::zeros(n, k);
    let mut out = DenseMatrix::zeros(n, w);
    let mut s = vec![0.0; k];
    for v in 0..n {
        for (l, h) in hops.iter().enumerate() {
            s[l] = dot(h.row(v), score);
        }
        let a = softmax(&s);
        alpha.row_mut(v).copy_from_slice(&a);
        let o = out.row_mut(v);
        for (l, h) in hops.iter().enumerate() {
            for (oj, hj) in o.iter_mut().zip(h.row(v)) {
                *oj += a[l] * hj;
            }
        }
    }
    Ok((out, alpha))
}

/// Gradients of `hop_attention_forward` with respect to each hop and the
/// score vector, given the upstream gradient on the combined output.
pub fn hop_attention_backward(
    hops: &[DenseMatrix],
    alpha: &DenseMatrix,
    score: &[f64],
    grad_out: &DenseMatrix,
) -> Result<(Vec<DenseMatrix>, Vec<f64>)> {
    let k = hops.len();
    let (n, w) = grad_out.shape();
    if alpha.shape() != (n, k) || hops.iter().any(|h| h.shape() != (n, w)) {
        return Err(Error::contract("hop attention backward shapes disagree"));
    }
    let mut dhops: Vec<DenseMatrix> = (0..k).map(|_| DenseMatrix::zeros(n, w)).collect();
    let mut dscore = vec![0.0; w];
    let mut da = vec![0.0; k];
    for v in 0..n {
        let g = grad_out.row(v);
        let a = alpha.row(v);
        for (l, h) in hops.iter().enumerate() {
            da[l] = dot(g, h.row(v));
        }
        let ds = softmax_backward(a, &da);
        for (l, h) in hops.iter().enumerate() {
            let hr = h.row(v);
            let d = dhops[l].row_mut(v);
            for j in 0..w {
                d[j] = a[l] * g[j] + ds[l] * score[j];
                dscore[j] += ds[l] * hr[j];
            }
        }
    }
    Ok((dhops, dscore))
}

/// Per-hop ReLU branches, a shared score vector and an MLP head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopAttentionParams {
    pub branches: Vec<Linear>,
    pub score: Vec<f64>,
    pub head: MlpParams,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for HopAttentionParams {
    fn eq(&self, other: &Self) -> bool {
        self.branches == other.branches && self.score == other.score && self.head == other.head
    }
}

#[derive(Debug, Clone)]
pub struct HopCache {
    generation: u64,
    pre: Vec<DenseMatrix>,
    hidden: Vec<DenseMatrix>,
    alpha: DenseMatrix,
    head: MlpCache,
}

impl HopAttentionParams {
    /// `depth + 1` branches from `num_features` to the head's input width.
    pub fn init(depth: usize, num_features: usize, head: MlpConfig, rng: &mut RngStream) -> Self {
        let width = head.dims[0];
        let branches = (0..=depth)
            .map(|_| Linear::init(num_features, width, rng))
            .collect();
        let a = 1.0 / (width as f64).sqrt();
        let score = (0..width).map(|_| rng.uniform(-a, a)).collect();
        let head = MlpParams::init(head, rng);
        Self {
            branches,
            score,
            head,
            generation: 0,
        }
    }

    pub fn num_hops(&self) -> usize {
        self.branches.len()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    pub fn forward(
        &self,
        hops: &[DenseMatrix],
        train: bool,
        rng: Option<&mut RngStream>,
    ) -> Result<(DenseMatrix, HopCache)> {
        if hops.len() != self.branches.len() {
            return Err(Error::contract(format!(
                "expected {} hop inputs, got {}",
                self.branches.len(),
                hops.len()
            )));
        }
        let mut pre = Vec::with_capacity(hops.len());
        let mut hidden = Vec::with_capacity(hops.len());
        for (b, x) in self.branches.iter().zip(hops) {
            if x.cols() != b.input_dim() {
                return Err(Error::contract("hop input width does not match its branch"));
            }
            let z = b.forward(x)?;
            let mut h = z.clone();
            h.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            pre.push(z);
            hidden.push(h);
        }
        let (combined, alpha) = hop_attention_forward(&hidden, &self.score)?;
        let (logits, head) = self.head.forward(&combined, train, rng)?;
        Ok((
            logits,
            HopCache {
                generation: self.generation,
                pre,
                hidden,
                alpha,
                head,
            },
        ))
    }

    pub fn backward(
        &self,
        hops: &[DenseMatrix],
        cache: &HopCache,
        grad_out: &DenseMatrix,
    ) -> Result<Self> {
        if cache.generation != self.generation {
            return Err(Error::contract(
                "stale forward cache: parameters changed since the forward pass",
            ));
        }
        let (ghead, dc) = self.head.backward(&cache.head, grad_out)?;
        let (dh, dscore) = hop_attention_backward(&cache.hidden, &cache.alpha, &self.score, &dc)?;
        let mut grads = self.zeros_like();
        grads.head = ghead;
        grads.score = dscore;
        for (l, (mut d, z)) in dh.into_iter().zip(&cache.pre).enumerate() {
            for (dv, zv) in d.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if *zv <= 0.0 {
                    *dv = 0.0;
                }
            }
            grads.branches[l].weight = hops[l].t_matmul(&d)?;
            grads.branches[l].bias = d.sum_rows();
        }
        Ok(grads)
    }
}

impl Parameters for HopAttentionParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for b in &self.branches {
            out.push(b.weight.as_slice());
            out.push(b.bias.as_slice());
        }
        out.push(self.score.as_slice());
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out = Vec::new();
        for b in &mut self.branches {
            out.push(b.weight.as_mut_slice());
            out.push(b.bias.as_mut_slice());
        }
        out.push(self.score.as_mut_slice());
        out.extend(self.head.tensors_mut());
        out
    }
}
