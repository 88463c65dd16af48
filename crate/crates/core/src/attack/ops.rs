//! Trace-level operations: cyclic roll, temporal derivatives, the two
//! regularizers with their exact gradients, the margin loss, perturbation
//! application with clipping, and the l-infinity projection.

use crate::error::{Error, Result};
use crate::net::Prediction;
use crate::scalar::{cast, Scalar};
use crate::video::{Perturbation, VideoTensor};
use serde::{Deserialize, Serialize};

/// Cyclically shift the leading (time) axis of a `frames x stride` buffer:
/// output frame `i` takes input frame `(i + tau) mod frames`.
pub fn roll<T: Scalar>(data: &[T], frames: usize, tau: i64) -> Vec<T> {
    assert!(frames > 0 && data.len() % frames == 0);
    let stride = data.len() / frames;
    let shift = tau.rem_euclid(frames as i64) as usize;
    if shift == 0 {
        return data.to_vec();
    }
    let mut out = Vec::with_capacity(data.len());
    for i in 0..frames {
        let src = (i + shift) % frames;
        out.extend_from_slice(&data[src * stride..(src + 1) * stride]);
    }
    out
}

/// Roll a perturbation trace along time.
pub fn roll_perturbation<T: Scalar>(p: &Perturbation<T>, tau: i64) -> Perturbation<T> {
    let rolled = roll(p.trace(), p.dims().t, tau);
    Perturbation::new(*p.dims(), rolled).expect("roll preserves validity")
}

/// First-order cyclic temporal difference: `roll(x, 1) - x`.
pub fn temporal_diff1<T: Scalar>(data: &[T], frames: usize) -> Result<Vec<T>> {
    if frames < 2 {
        return Err(Error::validation(format!(
            "first temporal difference needs T >= 2, got {}",
            frames
        )));
    }
    let rolled = roll(data, frames, 1);
    Ok(rolled
        .iter()
        .zip(data)
        .map(|(&a, &b)| a - b)
        .collect())
}

/// Second-order cyclic temporal difference: `roll(x, -1) - 2x + roll(x, 1)`.
pub fn temporal_diff2<T: Scalar>(data: &[T], frames: usize) -> Result<Vec<T>> {
    if frames < 3 {
        return Err(Error::validation(format!(
            "second temporal difference needs T >= 3, got {}",
            frames
        )));
    }
    let back = roll(data, frames, -1);
    let fwd = roll(data, frames, 1);
    Ok(back
        .iter()
        .zip(data)
        .zip(&fwd)
        .map(|((&b, &x), &f)| b - (x + x) + f)
        .collect())
}

fn sum_sq<T: Scalar>(data: &[T]) -> T {
    data.iter().fold(T::zero(), |a, &x| a + x * x)
}

/// Thickness regularizer: mean squared trace amplitude, `|delta|_2^2 / 3T`.
pub fn thickness_reg<T: Scalar>(delta: &Perturbation<T>) -> T {
    sum_sq(delta.trace()) / cast::<T>(delta.dims().trace_len() as f64)
}

/// Gradient of [`thickness_reg`]: `2 delta / 3T`.
pub fn thickness_reg_grad<T: Scalar>(delta: &Perturbation<T>) -> Vec<T> {
    let scale = cast::<T>(2.0) / cast::<T>(delta.dims().trace_len() as f64);
    delta.trace().iter().map(|&x| x * scale).collect()
}

/// Roughness regularizer: energy of both cyclic temporal differences,
/// `(|d1|_2^2 + |d2|_2^2) / 3T`.
pub fn roughness_reg<T: Scalar>(delta: &Perturbation<T>) -> Result<T> {
    let t = delta.dims().t;
    let d1 = temporal_diff1(delta.trace(), t)?;
    let d2 = temporal_diff2(delta.trace(), t)?;
    let n = cast::<T>(delta.dims().trace_len() as f64);
    Ok(sum_sq(&d1) / n + sum_sq(&d2) / n)
}

/// Gradient of [`roughness_reg`] via the adjoints of the difference
/// operators: `2 (roll(d1,-1) - d1)/3T + 2 (roll(d2,1) - 2 d2 + roll(d2,-1))/3T`.
pub fn roughness_reg_grad<T: Scalar>(delta: &Perturbation<T>) -> Result<Vec<T>> {
    let t = delta.dims().t;
    let d1 = temporal_diff1(delta.trace(), t)?;
    let d2 = temporal_diff2(delta.trace(), t)?;
    let d1_back = roll(&d1, t, -1);
    let d2_fwd = roll(&d2, t, 1);
    let d2_back = roll(&d2, t, -1);
    let scale = cast::<T>(2.0) / cast::<T>(delta.dims().trace_len() as f64);
    let two = cast::<T>(2.0);
    Ok((0..delta.trace().len())
        .map(|i| scale * ((d1_back[i] - d1[i]) + (d2_fwd[i] - two * d2[i] + d2_back[i])))
        .collect())
}

/// Which output the margin is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarginSpace {
    /// Margin and gradient both in probability space (default).
    Probability,
    /// Margin tested on probabilities, gradient routed through the logit
    /// difference (surrogate gradient; the reported value is unchanged).
    LogitWithProbabilityMargin,
}

/// Attack direction for the margin loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarginDirection {
    /// Push the original class below the runner-up.
    Untargeted { original: usize },
    /// Pull a chosen class above all others.
    Targeted { target: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MarginSpec<T: Scalar> {
    /// Required probability gap, > 0.
    pub m: T,
    pub space: MarginSpace,
    pub direction: MarginDirection,
}

impl<T: Scalar> MarginSpec<T> {
    pub fn untargeted(m: T, original: usize) -> Self {
        MarginSpec {
            m,
            space: MarginSpace::Probability,
            direction: MarginDirection::Untargeted { original },
        }
    }

    /// Same spec with the untargeted original class replaced; targeted specs
    /// pass through unchanged.
    pub fn with_original(&self, original: usize) -> Self {
        let direction = match self.direction {
            MarginDirection::Untargeted { .. } => MarginDirection::Untargeted { original },
            t @ MarginDirection::Targeted { .. } => t,
        };
        MarginSpec {
            direction,
            ..*self
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.m > T::zero()) {
            return Err(Error::validation(format!("margin must be > 0, got {}", self.m)));
        }
        if num_classes < 2 {
            return Err(Error::validation(format!(
                "margin loss needs K >= 2, got {}",
                num_classes
            )));
        }
        let class = match self.direction {
            MarginDirection::Untargeted { original } => original,
            MarginDirection::Targeted { target } => target,
        };
        if class >= num_classes {
            return Err(Error::validation(format!(
                "margin class {} out of range for K = {}",
                class, num_classes
            )));
        }
        Ok(())
    }
}

/// Index of the largest entry excluding `skip`, lowest index on ties.
fn argmax_excluding<T: Scalar>(values: &[T], skip: usize) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in values.iter().enumerate() {
        if i == skip {
            continue;
        }
        if best == usize::MAX || v > values[best] {
            best = i;
        }
    }
    best
}

/// Margin head evaluated on probabilities: the raw margin `l_m`, the rival
/// class index, and the hinge/quadratic envelope value with its derivative
/// w.r.t. `l_m`.
struct MarginEval<T: Scalar> {
    value: T,
    dvalue_dlm: T,
    class: usize,
    rival: usize,
    sign: T,
}

fn margin_eval<T: Scalar>(probabilities: &[T], spec: &MarginSpec<T>) -> Result<MarginEval<T>> {
    spec.validate(probabilities.len())?;
    let (class, sign) = match spec.direction {
        MarginDirection::Untargeted { original } => (original, T::one()),
        MarginDirection::Targeted { target } => (target, -T::one()),
    };
    let rival = argmax_excluding(probabilities, class);
    // untargeted: l_m = y_t - max_{i != t} y_i + m; targeted flips the sign
    // of the difference term.
    let lm = sign * (probabilities[class] - probabilities[rival]) + spec.m;
    let (value, dvalue_dlm) = if lm <= T::zero() {
        (T::zero(), T::zero())
    } else if lm < spec.m {
        (lm * lm / spec.m, cast::<T>(2.0) * lm / spec.m)
    } else {
        (lm, T::one())
    };
    Ok(MarginEval {
        value,
        dvalue_dlm,
        class,
        rival,
        sign,
    })
}

/// Margin loss of a prediction, always measured in probability space.
pub fn margin_loss<T: Scalar>(pred: &Prediction<T>, spec: &MarginSpec<T>) -> Result<T> {
    Ok(margin_eval(&pred.probabilities, spec)?.value)
}

/// Margin loss plus its gradient w.r.t. the logits.
///
/// In [`MarginSpace::Probability`] mode the gradient is exact: the
/// probability-space gradient pulled back through the softmax Jacobian. In
/// [`MarginSpace::LogitWithProbabilityMargin`] mode the branch factor is
/// still taken in probability space but the difference term is
/// differentiated as a logit difference, which skips the softmax Jacobian.
pub fn margin_loss_dlogits<T: Scalar>(
    pred: &Prediction<T>,
    spec: &MarginSpec<T>,
) -> Result<(T, Vec<T>)> {
    let eval = margin_eval(&pred.probabilities, spec)?;
    let k = pred.probabilities.len();
    let mut dlogits = vec![T::zero(); k];
    if eval.dvalue_dlm == T::zero() {
        return Ok((eval.value, dlogits));
    }
    match spec.space {
        MarginSpace::Probability => {
            // dL/dp is sparse: +g at class, -g at rival (times direction sign)
            let g = eval.dvalue_dlm * eval.sign;
            let mut dp = vec![T::zero(); k];
            dp[eval.class] = g;
            dp[eval.rival] = dp[eval.rival] - g;
            // softmax pullback: dz_i = p_i (dp_i - sum_j dp_j p_j)
            let inner = dp
                .iter()
                .zip(&pred.probabilities)
                .fold(T::zero(), |a, (&d, &p)| a + d * p);
            for i in 0..k {
                dlogits[i] = pred.probabilities[i] * (dp[i] - inner);
            }
        }
        MarginSpace::LogitWithProbabilityMargin => {
            let g = eval.dvalue_dlm * eval.sign;
            dlogits[eval.class] = g;
            dlogits[eval.rival] = dlogits[eval.rival] - g;
        }
    }
    Ok((eval.value, dlogits))
}

/// Add the trace to the clip, broadcasting each frame offset over the
/// frame's spatial extent, then clip into `[v_min, v_max]`.
pub fn apply_perturbation<T: Scalar>(
    v: &VideoTensor<T>,
    delta: &Perturbation<T>,
) -> Result<VideoTensor<T>> {
    let (out, _) = apply_perturbation_with_mask(v, delta)?;
    Ok(out)
}

/// [`apply_perturbation`] plus the pass-through mask: `mask[i]` is true
/// where the sum stayed inside the valid range (the clamp subgradient is 1
/// there and 0 where saturated).
pub fn apply_perturbation_with_mask<T: Scalar>(
    v: &VideoTensor<T>,
    delta: &Perturbation<T>,
) -> Result<(VideoTensor<T>, Vec<bool>)> {
    let dims = v.dims();
    if !dims.trace_compatible(delta.dims()) {
        return Err(Error::shape(format!(
            "perturbation T/C {}x{} does not match clip {}x{}",
            delta.dims().t,
            delta.dims().c,
            dims.t,
            dims.c
        )));
    }
    let lo = T::from_f64(dims.v_min).unwrap();
    let hi = T::from_f64(dims.v_max).unwrap();
    let mut out = Vec::with_capacity(dims.video_len());
    let mut mask = Vec::with_capacity(dims.video_len());
    let data = v.data();
    let frame_len = dims.h * dims.w * dims.c;
    for t in 0..dims.t {
        let offsets = &delta.trace()[t * dims.c..(t + 1) * dims.c];
        let frame = &data[t * frame_len..(t + 1) * frame_len];
        for (i, &x) in frame.iter().enumerate() {
            let sum = x + offsets[i % dims.c];
            let inside = sum >= lo && sum <= hi;
            mask.push(inside);
            out.push(if inside {
                sum
            } else if sum < lo {
                lo
            } else {
                hi
            });
        }
    }
    Ok((VideoTensor::new(*dims, out)?, mask))
}

/// Clamp every trace element into `[-zeta, zeta]`. Idempotent.
pub fn project_linf<T: Scalar>(delta: &Perturbation<T>, zeta: T) -> Result<Perturbation<T>> {
    if !(zeta > T::zero()) {
        return Err(Error::validation(format!(
            "l-infinity budget must be > 0, got {}",
            zeta
        )));
    }
    let trace = delta
        .trace()
        .iter()
        .map(|&x| x.min(zeta).max(-zeta))
        .collect();
    Perturbation::new(*delta.dims(), trace)
}
