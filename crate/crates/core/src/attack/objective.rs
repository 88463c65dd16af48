//! The combined attack objective and its exact gradient w.r.t. the trace.

use super::ops::{
    apply_perturbation_with_mask, margin_loss_dlogits, roll, roughness_reg, roughness_reg_grad,
    thickness_reg, thickness_reg_grad, MarginSpec,
};
use crate::error::{Error, Result};
use crate::net::{backward, forward_with_tape, ModelParams};
use crate::scalar::{cast, Scalar};
use crate::video::{LabeledVideo, Perturbation};
use serde::{Deserialize, Serialize};

/// Weights of the regularization block: `lambda * (beta1 D1 + beta2 D2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RegWeights<T: Scalar> {
    pub lambda: T,
    pub beta1: T,
    pub beta2: T,
}

impl<T: Scalar> RegWeights<T> {
    /// lambda = 1, beta1 = beta2 = 0.5.
    pub fn standard() -> Self {
        RegWeights {
            lambda: T::one(),
            beta1: cast(0.5),
            beta2: cast(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::validation(format!(
                    "{} must be finite and >= 0, got {}",
                    name, v
                )));
            }
        }
        Ok(())
    }
}

/// Objective value and gradient:
///
/// `loss = lambda (beta1 D1 + beta2 D2) + mean_n l(F(clip(X_n + roll(delta, tau_n))), t_n)`
///
/// The gradient w.r.t. the trace is exact given two documented subgradient
/// conventions: the clamp contributes 0 where saturated and ReLU contributes
/// 0 at exactly 0. Spatial broadcasting sums each frame gradient over H x W,
/// and per-clip rolls are undone before accumulation. For untargeted margin
/// specs each clip's own label is substituted as the original class.
pub fn objective<T: Scalar>(
    delta: &Perturbation<T>,
    batch: &[&LabeledVideo<T>],
    params: &ModelParams<T>,
    weights: &RegWeights<T>,
    spec: &MarginSpec<T>,
    tau_per_clip: Option<&[i64]>,
) -> Result<(T, Vec<T>)> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch".to_string()));
    }
    weights.validate()?;
    spec.validate(params.num_classes)?;
    if let Some(taus) = tau_per_clip {
        if taus.len() != batch.len() {
            return Err(Error::shape(format!(
                "{} shifts for {} clips",
                taus.len(),
                batch.len()
            )));
        }
    }
    let dims = delta.dims();
    let trace_len = dims.trace_len();

    // regularization block
    let mut loss = weights.lambda * (weights.beta1 * thickness_reg(delta));
    let mut grad: Vec<T> = thickness_reg_grad(delta)
        .into_iter()
        .map(|g| g * weights.lambda * weights.beta1)
        .collect();
    if weights.beta2 > T::zero() {
        loss = loss + weights.lambda * weights.beta2 * roughness_reg(delta)?;
        for (g, r) in grad.iter_mut().zip(roughness_reg_grad(delta)?) {
            *g = *g + weights.lambda * weights.beta2 * r;
        }
    }

    // data block, mean over the batch, reduced in batch order
    use rayon::prelude::*;
    let per_clip: Vec<Result<(T, Vec<T>)>> = batch
        .par_iter()
        .enumerate()
        .map(|(n, lv)| {
            let tau = tau_per_clip.map_or(0, |taus| taus[n]);
            let shifted = Perturbation::new(*dims, roll(delta.trace(), dims.t, tau))?;
            let (adv, mask) = apply_perturbation_with_mask(&lv.video, &shifted)?;
            let clip_spec = spec.with_original(lv.label);
            let (pred, tape) = forward_with_tape(params, &adv)?;
            let (value, dlogits) = margin_loss_dlogits(&pred, &clip_spec)?;
            let (input_grad, _) = backward(params, &tape, &dlogits, true, false)?;
            let input_grad = input_grad.unwrap();
            // clamp subgradient, then spatial reduction to T x C
            let vd = lv.video.dims();
            let mut shifted_grad = vec![T::zero(); trace_len];
            let frame_len = vd.h * vd.w * vd.c;
            for t in 0..vd.t {
                let base = t * frame_len;
                for i in 0..frame_len {
                    if mask[base + i] {
                        let c = i % vd.c;
                        shifted_grad[t * vd.c + c] =
                            shifted_grad[t * vd.c + c] + input_grad[base + i];
                    }
                }
            }
            // undo the roll: forward rolled by tau, so pull back by -tau
            let clip_grad = roll(&shifted_grad, vd.t, -tau);
            Ok((value, clip_grad))
        })
        .collect();

    // sum first, divide once: the mean of n copies of a clip is then exactly
    // the single-clip term
    let n = cast::<T>(batch.len() as f64);
    let mut data_loss = T::zero();
    let mut data_grad = vec![T::zero(); trace_len];
    for item in per_clip {
        let (value, clip_grad) = item?;
        data_loss = data_loss + value;
        for (g, c) in data_grad.iter_mut().zip(clip_grad) {
            *g = *g + c;
        }
    }
    loss = loss + data_loss / n;
    for (g, d) in grad.iter_mut().zip(data_grad) {
        *g = *g + d / n;
    }
    Ok((loss, grad))
}
