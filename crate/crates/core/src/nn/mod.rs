//! Dense neural-network substrate: matrices, a residual MLP with explicit
//! backpropagation, losses, Gumbel-Softmax, Adam and a finite-difference
//! gradient checker.

mod adam;
mod gradcheck;
mod loss;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use loss::{
    cross_entropy, gumbel_softmax, gumbel_softmax_with_noise, kl_divergence, log_softmax,
    sample_gumbel, softmax, softmax_backward, GumbelSample, KlDivergence, KL_FLOOR,
};
pub use matrix::{argmax, dot, DenseMatrix};
pub use mlp::{
    layer_norm_rows, Linear, MlpCache, MlpConfig, MlpParams, Normalization, LAYER_NORM_EPS,
};

/// A fixed collection of trainable tensors.
///
/// Gradients are represented by a value of the same type, so the optimizer
/// and the gradient checker can pair tensors up by position.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        debug_assert_eq!(off, flat.len());
    }

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Accumulates `other` into `self`; tensors are paired by position.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}
