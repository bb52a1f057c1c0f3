use super::matrix::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::rng::RngStream;

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|&v| v - lse).collect()
}

/// Pulls a gradient w.r.t. softmax outputs back to its inputs.
pub fn softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let inner: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    probs
        .iter()
        .zip(dprobs)
        .map(|(p, d)| p * (d - inner))
        .collect()
}

/// Mean softmax cross-entropy over `mask`; the gradient is zero elsewhere.
pub fn cross_entropy(
    logits: &DenseMatrix,
    labels: &LabelVector,
    mask: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if mask.is_empty() {
        return Err(Error::contract("cross_entropy over an empty mask"));
    }
    if logits.cols() != labels.num_classes() {
        return Err(Error::contract(format!(
            "logits have {} columns for {} classes",
            logits.cols(),
            labels.num_classes()
        )));
    }
    let inv = 1.0 / mask.len() as f64;
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    for &v in mask {
        let y = labels.get(v);
        let lp = log_softmax(logits.row(v));
        loss -= lp[y];
        let g = grad.row_mut(v);
        for (c, (gc, l)) in g.iter_mut().zip(&lp).enumerate() {
            *gc = (l.exp() - if c == y { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((loss * inv, grad))
}

pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlDivergence {
    pub value: f64,
    /// Some entry of `q` sat at or below the floor and was clamped.
    pub clamped: bool,
}

/// `Σ p_i ln(p_i / q_i)` with `0 · ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<KlDivergence> {
    if p.len() != q.len() {
        return Err(Error::contract("kl_divergence: length mismatch"));
    }
    let mut value = 0.0;
    let mut clamped = false;
    for (&pi, &qi) in p.iter().zip(q) {
        let qi = if qi <= KL_FLOOR {
            clamped = true;
            KL_FLOOR
        } else {
            qi
        };
        if pi > 0.0 {
            value += pi * (pi.ln() - qi.ln());
        }
    }
    Ok(KlDivergence { value, clamped })
}

/// Standard Gumbel draws `-ln(-ln u)`, `u ~ U(0, 1)` with endpoints rejected.
pub fn sample_gumbel(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| -(-rng.open01().ln()).ln()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelSample {
    pub probs: Vec<f64>,
    pub noise: Vec<f64>,
}

/// `softmax((logits + g) / tau)` for given noise `g`.
pub fn gumbel_softmax_with_noise(logits: &[f64], noise: &[f64], tau: f64) -> Vec<f64> {
    let z: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / tau)
        .collect();
    softmax(&z)
}

/// Soft (reparameterized) Gumbel-Softmax sample. The drawn noise is returned
/// so callers can backpropagate through the same sample.
pub fn gumbel_softmax(logits: &[f64], tau: f64, rng: &mut RngStream) -> Result<GumbelSample> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let noise = sample_gumbel(rng, logits.len());
    let probs = gumbel_softmax_with_noise(logits, &noise, tau);
    Ok(GumbelSample { probs, noise })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_shift_invariant() {
        let z = [0.3, -1.2, 2.0, 0.0];
        let a = softmax(&z);
        let b = softmax(&z.map(|v| v + 123.0));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_limits() {
        let y = LabelVector::new(vec![2], 4).unwrap();
        let uniform = DenseMatrix::zeros(1, 4);
        let (l, _) = cross_entropy(&uniform, &y, &[0]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-14);

        let confident = DenseMatrix::from_rows(&[vec![0.0, 0.0, 200.0, 0.0]]).unwrap();
        let (l, g) = cross_entropy(&confident, &y, &[0]).unwrap();
        assert!(l < 1e-12);
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cross_entropy_masks_gradient() {
        let y = LabelVector::new(vec![0, 1], 2).unwrap();
        let logits = DenseMatrix::from_rows(&[vec![0.5, -0.5], vec![1.0, 2.0]]).unwrap();
        let (_, g) = cross_entropy(&logits, &y, &[1]).unwrap();
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert!(matches!(
            cross_entropy(&logits, &y, &[]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&[0.2, 0.8], &[0.2, 0.8]).unwrap().value, 0.0);
        let k = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((k.value - 2f64.ln()).abs() < 1e-15);
        assert!(!k.clamped);
        let k = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(k.clamped);
        assert!(k.value.is_finite());
    }

    #[test]
    fn gumbel_sample_in_open_simplex() {
        let mut rng = RngStream::new(3);
        for _ in 0..100 {
            let s = gumbel_softmax(&[1.0, -2.0, 0.5], 2.0, &mut rng).unwrap();
            assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.probs.iter().all(|&p| p > 0.0 && p < 1.0));
        }
        assert!(gumbel_softmax(&[1.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn gumbel_reproducible() {
        let a = gumbel_softmax(&[0.1, 0.2], 2.0, &mut RngStream::new(11)).unwrap();
        let b = gumbel_softmax(&[0.1, 0.2], 2.0, &mut RngStream::new(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn softmax_backward_matches_jacobian() {
        let z = [0.4, -0.3, 1.1];
        let p = softmax(&z);
        let d = [1.0, 2.0, -0.5];
        let g = softmax_backward(&p, &d);
        for j in 0..3 {
            let mut want = 0.0;
            for i in 0..3 {
                let jac = p[i] * (if i == j { 1.0 } else { 0.0 } - p[j]);
                want += d[i] * jac;
            }
            assert!((g[j] - want).abs() < 1e-15);
        }
    }
}
