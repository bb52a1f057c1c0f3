//! Residual ReLU MLP with optional layer normalization and dropout.
//!
//! Hidden layer `k` computes
//! `h_{k+1} = dropout(relu(norm(h_k W_k + b_k))) + [residual] h_k`,
//! where the skip term is only added when input and output widths agree
//! (and never in the message-passing variant).
//! The last layer is a plain affine map to the output width.

use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::Parameters;
use crate::error::{Error, Result};
use crate::graph::{propagate, PropagationOperator};
use crate::rng::RngStream;

pub const LAYER_NORM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    Layer,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "layer" => Ok(Normalization::Layer),
            "batch" => Err(Error::config(
                "batch normalization is not supported (training must stay per-sample deterministic); use `none` or `layer`",
            )),
            other => Err(Error::config(format!("unknown normalization `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Input width, hidden widths, output width.
    pub dims: Vec<usize>,
    pub norm: Normalization,
    /// Dropout after each hidden activation (training only).
    pub dropout: f64,
    /// Dropout on the input features (training only).
    pub input_dropout: f64,
    pub residual: bool,
}

impl MlpConfig {
    /// `layers` affine maps from `input` to `output` through `hidden`-wide
    /// hidden layers.
    pub fn new(input: usize, hidden: usize, output: usize, layers: usize) -> Self {
        let mut dims = vec![input];
        for _ in 1..layers.max(1) {
            dims.push(hidden);
        }
        dims.push(output);
        Self {
            dims,
            norm: Normalization::None,
            dropout: 0.0,
            input_dropout: 0.0,
            residual: true,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `in × out`
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization for weights and bias.
    pub fn init(input: usize, output: usize, rng: &mut RngStream) -> Self {
        let a = 1.0 / (input.max(1) as f64).sqrt();
        let weight = DenseMatrix::from_fn(input, output, |_, _| rng.uniform(-a, a));
        let bias = (0..output).map(|_| rng.uniform(-a, a)).collect();
        Self { weight, bias }
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = x.matmul(&self.weight)?;
        z.add_row_vector(&self.bias);
        Ok(z)
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub config: MlpConfig,
    pub layers: Vec<Linear>,
    /// One entry per hidden layer when layer normalization is on.
    pub norms: Vec<LayerNormParams>,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.layers == other.layers && self.norms == other.norms
    }
}

/// Normalizes each row to zero mean and unit variance. Returns the normalized
/// rows and the per-row inverse standard deviations.
pub fn layer_norm_rows(z: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let w = z.cols() as f64;
    let mut out = z.clone();
    let mut inv_std = Vec::with_capacity(z.rows());
    for i in 0..z.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / w;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
        let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * s);
        inv_std.push(s);
    }
    (out, inv_std)
}

#[derive(Debug, Clone)]
struct HiddenCache {
    input: DenseMatrix,
    normalized: Option<(DenseMatrix, Vec<f64>)>,
    /// Post-norm, pre-activation values; the ReLU mask is `pre > 0`.
    pre: DenseMatrix,
    dropout_mask: Option<Vec<f64>>,
    residual: bool,
}

/// Intermediate values from a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    generation: u64,
    propagated: bool,
    input_mask: Option<Vec<f64>>,
    hidden: Vec<HiddenCache>,
    last_input: DenseMatrix,
}

fn dropout_mask(len: usize, p: f64, rng: &mut RngStream) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.bernoulli(p) { 0.0 } else { keep })
        .collect()
}

fn check_finite(m: &DenseMatrix, layer: usize) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(
            format!("mlp layer {layer}"),
            "non-finite activation",
        ))
    }
}

impl MlpParams {
    pub fn init(config: MlpConfig, rng: &mut RngStream) -> Self {
        let layers: Vec<Linear> = config
            .dims
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], rng))
            .collect();
        let norms = Self::default_norms(&config);
        Self {
            config,
            layers,
            norms,
            generation: 0,
        }
    }

    pub fn zeros(config: MlpConfig) -> Self {
        let layers = config
            .dims
            .windows(2)
            .map(|w| Linear::zeros(w[0], w[1]))
            .collect();
        let norms = Self::default_norms(&config);
        Self {
            config,
            layers,
            norms,
            generation: 0,
        }
    }

    /// Builds parameters from explicit layers, e.g. for fixed test networks.
    pub fn from_layers(config: MlpConfig, layers: Vec<Linear>) -> Result<Self> {
        if layers.len() != config.num_layers() {
            return Err(Error::contract("layer count does not match config"));
        }
        for (k, (l, w)) in layers.iter().zip(config.dims.windows(2)).enumerate() {
            if l.weight.shape() != (w[0], w[1]) || l.bias.len() != w[1] {
                return Err(Error::contract(format!("layer {k} shape does not chain")));
            }
        }
        let norms = Self::default_norms(&config);
        Ok(Self {
            config,
            layers,
            norms,
            generation: 0,
        })
    }

    fn default_norms(config: &MlpConfig) -> Vec<LayerNormParams> {
        if config.norm != Normalization::Layer {
            return vec![];
        }
        config.dims[1..config.dims.len() - 1]
            .iter()
            .map(|&w| LayerNormParams {
                gamma: vec![1.0; w],
                beta: vec![0.0; w],
            })
            .collect()
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z.generation = 0;
        z
    }

    pub fn input_dim(&self) -> usize {
        self.config.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.config.dims.last().expect("non-empty dims")
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn forward(
        &self,
        x: &DenseMatrix,
        train: bool,
        rng: Option<&mut RngStream>,
    ) -> Result<(DenseMatrix, MlpCache)> {
        self.forward_impl(x, train, rng, None)
    }

    /// Message-passing variant: every hidden layer aggregates its input with
    /// `op` before the affine map, `h_{k+1} = relu(norm(op h_k W_k + b_k))`.
    /// The output layer is not propagated.
    pub fn forward_propagated(
        &self,
        op: &PropagationOperator,
        x: &DenseMatrix,
        train: bool,
        rng: Option<&mut RngStream>,
    ) -> Result<(DenseMatrix, MlpCache)> {
        self.forward_impl(x, train, rng, Some(op))
    }

    fn forward_impl(
        &self,
        x: &DenseMatrix,
        train: bool,
        mut rng: Option<&mut RngStream>,
        op: Option<&PropagationOperator>,
    ) -> Result<(DenseMatrix, MlpCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::contract(format!(
                "mlp expects {} input columns, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let cfg = &self.config;
        let mut h = x.clone();
        let mut input_mask = None;
        if train && cfg.input_dropout > 0.0 {
            let r = rng
                .as_deref_mut()
                .ok_or_else(|| Error::contract("dropout needs an rng"))?;
            let mask = dropout_mask(h.as_slice().len(), cfg.input_dropout, r);
            for (v, m) in h.as_mut_slice().iter_mut().zip(&mask) {
                *v *= m;
            }
            input_mask = Some(mask);
        }

        let n_hidden = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(n_hidden);
        for k in 0..n_hidden {
            let layer = &self.layers[k];
            if let Some(op) = op {
                h = propagate(op, &h)?;
            }
            let z = layer.forward(&h)?;
            let (mut pre, normalized) = if cfg.norm == Normalization::Layer {
                let (xhat, inv_std) = layer_norm_rows(&z);
                let ln = &self.norms[k];
                let mut u = xhat.clone();
                for i in 0..u.rows() {
                    for ((v, g), b) in u.row_mut(i).iter_mut().zip(&ln.gamma).zip(&ln.beta) {
                        *v = *v * g + b;
                    }
                }
                (u, Some((xhat, inv_std)))
            } else {
                (z, None)
            };
            let mut out = pre.clone();
            out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            let mut mask = None;
            if train && cfg.dropout > 0.0 {
                let r = rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::contract("dropout needs an rng"))?;
                let m = dropout_mask(out.as_slice().len(), cfg.dropout, r);
                for (v, mk) in out.as_mut_slice().iter_mut().zip(&m) {
                    *v *= mk;
                }
                mask = Some(m);
            }
            let residual = cfg.residual && op.is_none() && h.cols() == out.cols();
            if residual {
                out.add_assign(&h)?;
            }
            check_finite(&out, k)?;
            // keep only the sign information of `pre` the backward pass needs
            if normalized.is_none() {
                pre.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
            }
            hidden.push(HiddenCache {
                input: std::mem::replace(&mut h, out),
                normalized,
                pre,
                dropout_mask: mask,
                residual,
            });
        }
        let logits = self.layers[n_hidden].forward(&h)?;
        check_finite(&logits, n_hidden)?;
        Ok((
            logits,
            MlpCache {
                generation: self.generation,
                propagated: op.is_some(),
                input_mask,
                hidden,
                last_input: h,
            },
        ))
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward(x, false, None)?.0)
    }

    /// Reverse-mode gradients for all parameters and for the input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &DenseMatrix,
    ) -> Result<(MlpParams, DenseMatrix)> {
        self.backward_impl(cache, grad_out, None)
    }

    /// Backward pass for `forward_propagated`; `op_t` is the transpose of the
    /// operator used in the forward pass.
    pub fn backward_propagated(
        &self,
        op_t: &PropagationOperator,
        cache: &MlpCache,
        grad_out: &DenseMatrix,
    ) -> Result<(MlpParams, DenseMatrix)> {
        self.backward_impl(cache, grad_out, Some(op_t))
    }

    fn backward_impl(
        &self,
        cache: &MlpCache,
        grad_out: &DenseMatrix,
        op_t: Option<&PropagationOperator>,
    ) -> Result<(MlpParams, DenseMatrix)> {
        if cache.propagated != op_t.is_some() {
            return Err(Error::contract(
                "backward variant does not match the forward pass",
            ));
        }
        if cache.generation != self.generation {
            return Err(Error::contract(
                "stale forward cache: parameters changed since the forward pass",
            ));
        }
        let n_hidden = self.layers.len() - 1;
        if cache.hidden.len() != n_hidden {
            return Err(Error::contract("forward cache does not match this network"));
        }
        if grad_out.shape() != (cache.last_input.rows(), self.output_dim()) {
            return Err(Error::contract("grad_out shape does not match logits"));
        }
        let mut grads = self.zeros_like();

        let last = &self.layers[n_hidden];
        grads.layers[n_hidden].weight = cache.last_input.t_matmul(grad_out)?;
        grads.layers[n_hidden].bias = grad_out.sum_rows();
        let mut dh = grad_out.matmul_t(&last.weight)?;

        for k in (0..n_hidden).rev() {
            let hc = &cache.hidden[k];
            let skip = if hc.residual { Some(dh.clone()) } else { None };
            let mut du = dh;
            if let Some(mask) = &hc.dropout_mask {
                for (v, m) in du.as_mut_slice().iter_mut().zip(mask) {
                    *v *= m;
                }
            }
            match &hc.normalized {
                None => {
                    // `pre` holds the 0/1 ReLU mask
                    for (v, m) in du.as_mut_slice().iter_mut().zip(hc.pre.as_slice()) {
                        *v *= m;
                    }
                }
                Some(_) => {
                    for (v, p) in du.as_mut_slice().iter_mut().zip(hc.pre.as_slice()) {
                        if *p <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
            let dz = if let Some((xhat, inv_std)) = &hc.normalized {
                let ln = &self.norms[k];
                let w = du.cols() as f64;
                let gl = &mut grads.norms[k];
                let mut dz = DenseMatrix::zeros(du.rows(), du.cols());
                for i in 0..du.rows() {
                    let dur = du.row(i);
                    let xr = xhat.row(i);
                    let mut dxhat = Vec::with_capacity(dur.len());
                    for j in 0..dur.len() {
                        gl.gamma[j] += dur[j] * xr[j];
                        gl.beta[j] += dur[j];
                        dxhat.push(dur[j] * ln.gamma[j]);
                    }
                    let mean_d = dxhat.iter().sum::<f64>() / w;
                    let mean_dx = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / w;
                    for (j, o) in dz.row_mut(i).iter_mut().enumerate() {
                        *o = inv_std[i] * (dxhat[j] - mean_d - xr[j] * mean_dx);
                    }
                }
                dz
            } else {
                du
            };
            grads.layers[k].weight = hc.input.t_matmul(&dz)?;
            grads.layers[k].bias = dz.sum_rows();
            dh = dz.matmul_t(&self.layers[k].weight)?;
            if let Some(op_t) = op_t {
                dh = propagate(op_t, &dh)?;
            }
            if let Some(s) = skip {
                dh.add_assign(&s)?;
            }
        }
        if let Some(mask) = &cache.input_mask {
            for (v, m) in dh.as_mut_slice().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        Ok((grads, dh))
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
        }
        for n in &self.norms {
            out.push(n.gamma.as_slice());
            out.push(n.beta.as_slice());
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        for n in &mut self.norms {
            out.push(n.gamma.as_mut_slice());
            out.push(n.beta.as_mut_slice());
        }
        out
    }
}
