use crate::error::{Error, Result};
use crate::nn::{
    gumbel_softmax_with_noise, kl_divergence, sample_gumbel, softmax, softmax_backward, KL_FLOOR,
};
use crate::rng::RngStream;

/// Softmax over a 0/1 vector: `e / (k e + n - k)` on ones, `1 / (k e + n - k)`
/// on zeros.
pub fn scope_target(bits: &[bool]) -> Vec<f64> {
    let z: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    softmax(&z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsscLoss {
    pub loss: f64,
    /// Gradient with respect to the predictor scores.
    pub grad: Vec<f64>,
    /// Some predicted probability fell below the KL floor.
    pub clamped: bool,
}

/// `KL(softmax(bits) || softmax((scores + noise) / tau))` and its gradient
/// along the reparameterized path. Clamped entries contribute no gradient.
pub fn pssc_loss_with_noise(
    bits: &[bool],
    scores: &[f64],
    tau: f64,
    noise: &[f64],
) -> Result<PsscLoss> {
    if bits.len() != scores.len() || noise.len() != scores.len() {
        return Err(Error::contract("pssc_loss: width mismatch"));
    }
    if !(tau > 0.0) {
        return Err(Error::contract(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let t = scope_target(bits);
    let q = gumbel_softmax_with_noise(scores, noise, tau);
    let kl = kl_divergence(&t, &q)?;
    let dq: Vec<f64> = t
        .iter()
        .zip(&q)
        .map(|(&ti, &qi)| if qi > KL_FLOOR { -ti / qi } else { 0.0 })
        .collect();
    let grad = softmax_backward(&q, &dq)
        .into_iter()
        .map(|g| g / tau)
        .collect();
    Ok(PsscLoss {
        loss: kl.value,
        grad,
        clamped: kl.clamped,
    })
}

/// As `pssc_loss_with_noise` with fresh Gumbel noise from `rng`, or with
/// the noise switched off when `rng` is `None`.
pub fn pssc_loss(
    bits: &[bool],
    scores: &[f64],
    tau: f64,
    rng: Option<&mut RngStream>,
) -> Result<PsscLoss> {
    let noise = match rng {
        Some(r) => sample_gumbel(r, scores.len()),
        None => vec![0.0; scores.len()],
    };
    pssc_loss_with_noise(bits, scores, tau, &noise)
}
