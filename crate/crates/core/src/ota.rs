//! Over-the-air channel simulator: the bulb-to-scene-to-camera path.
//!
//! The transmitted trace passes through a 3x3 chromatic crosstalk matrix,
//! a per-channel ambient offset, first-order cyclic exponential smoothing
//! (the bulb's finite rise/fall time), and an integer frame offset (camera
//! desynchronization); per-pixel Gaussian sensor noise is added last and
//! the result is clipped into the clip's intensity range.

use crate::attack::apply_perturbation;
use crate::error::{Error, Result};
use crate::linalg::{cond_3x3, invert_3x3, least_squares};
use crate::rng::stream_rng;
use crate::scalar::{cast, Scalar};
use crate::video::{Perturbation, VideoTensor};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Channel parameters.
///
/// `rise_alpha` is the per-frame smoothing step of the cyclic EMA: 1 means
/// the bulb settles within a frame, smaller values smear the commanded
/// trace over following frames. The ambient offset models deviation from
/// the bulb's baseline illumination, which sits at mid-range so both signs
/// of the trace are realizable; at the default symmetric range that
/// baseline is already part of the clean scene, hence `ambient = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Chromatic crosstalk matrix, row major: observed = M * commanded.
    pub crosstalk: [f64; 9],
    /// EMA step in (0, 1].
    pub rise_alpha: f64,
    /// Integer frame desynchronization (cyclic shift of the offsets).
    pub phase: i64,
    /// Per-channel ambient offset added before smoothing.
    pub ambient: [f64; 3],
    /// Per-pixel Gaussian sensor noise std-dev.
    pub noise_sigma: f64,
}

impl ChannelModel {
    /// The transparent channel: transmit reduces to plain perturbation
    /// application.
    pub fn identity() -> Self {
        ChannelModel {
            crosstalk: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            rise_alpha: 1.0,
            phase: 0,
            ambient: [0.0; 3],
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rise_alpha > 0.0 && self.rise_alpha <= 1.0) {
            return Err(Error::validation(format!(
                "rise_alpha must be in (0, 1], got {}",
                self.rise_alpha
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::validation(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.crosstalk.iter().any(|x| !x.is_finite())
            || self.ambient.iter().any(|x| !x.is_finite())
        {
            return Err(Error::validation(
                "channel matrix and ambient must be finite".to_string(),
            ));
        }
        Ok(())
    }
}

/// One calibration probe: the commanded trace and the camera's observed
/// per-channel response, both `T x 3` and phase aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub sent: Vec<[f64; 3]>,
    pub observed: Vec<[f64; 3]>,
}

impl CalibrationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.sent.len() != self.observed.len() {
            return Err(Error::validation(format!(
                "sent trace has {} frames, observed has {}",
                self.sent.len(),
                self.observed.len()
            )));
        }
        if self.sent.len() < 2 {
            return Err(Error::validation("calibration traces need T >= 2".to_string()));
        }
        Ok(())
    }
}

/// Result of [`calibrate`]: the recovered chromatic map and rise step plus
/// the root-mean-square fit residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub crosstalk: [f64; 9],
    pub rise_alpha: f64,
    pub ambient: [f64; 3],
    pub rms_residual: f64,
}

/// Steady-state cyclic EMA of a `frames x 3` sequence: the periodic fixed
/// point of `s[t] = (1 - alpha) s[t-1] + alpha u[t]`, a convex combination
/// of rolled copies of the input.
pub fn cyclic_ema(input: &[[f64; 3]], alpha: f64) -> Vec<[f64; 3]> {
    let frames = input.len();
    if alpha >= 1.0 {
        return input.to_vec();
    }
    let decay = 1.0 - alpha;
    let denom = 1.0 - decay.powi(frames as i32);
    let mut out = vec![[0.0; 3]; frames];
    for (t, slot) in out.iter_mut().enumerate() {
        let mut weight = alpha / denom;
        for k in 0..frames {
            let src = (t + frames - k) % frames;
            for c in 0..3 {
                slot[c] += weight * input[src][c];
            }
            weight *= decay;
        }
    }
    out
}

/// The per-frame offsets the scene actually receives for a commanded trace:
/// crosstalk and ambient, smoothed by the cyclic EMA, then shifted by the
/// channel phase. Pure and noise free; `transmit` adds noise and clipping.
pub fn channel_offsets<T: Scalar>(delta: &Perturbation<T>, ch: &ChannelModel) -> Result<Vec<[f64; 3]>> {
    ch.validate()?;
    let dims = delta.dims();
    let mut driven = vec![[0.0; 3]; dims.t];
    for (t, slot) in driven.iter_mut().enumerate() {
        let mut cmd = [0.0; 3];
        for (c, v) in cmd.iter_mut().enumerate() {
            *v = delta.get(t, c).to_f64().unwrap();
        }
        for r in 0..3 {
            let mut acc = ch.ambient[r];
            for c in 0..3 {
                acc += ch.crosstalk[r * 3 + c] * cmd[c];
            }
            slot[r] = acc;
        }
    }
    let smoothed = cyclic_ema(&driven, ch.rise_alpha);
    // roll by phase: frame i shows what was commanded for frame i + phase
    let t = dims.t as i64;
    let shift = ch.phase.rem_euclid(t) as usize;
    let mut out = vec![[0.0; 3]; dims.t];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = smoothed[(i + shift) % dims.t];
    }
    Ok(out)
}

/// Send a trace into the scene through the channel and observe the result:
/// `clamp(v + broadcast(offsets) + noise)`.
///
/// With the identity channel this is bit-identical to
/// [`apply_perturbation`]; the noiseless case draws nothing from the seed.
pub fn transmit<T: Scalar>(
    v: &VideoTensor<T>,
    delta: &Perturbation<T>,
    ch: &ChannelModel,
    seed: u64,
) -> Result<VideoTensor<T>> {
    let dims = v.dims();
    if !dims.trace_compatible(delta.dims()) {
        return Err(Error::shape(format!(
            "trace T/C {}x{} does not match clip {}x{}",
            delta.dims().t,
            delta.dims().c,
            dims.t,
            dims.c
        )));
    }
    let offsets = channel_offsets(delta, ch)?;
    let effective = Perturbation::<T>::new(
        *delta.dims(),
        offsets
            .iter()
            .flat_map(|frame| frame.iter().map(|&x| cast::<T>(x)))
            .collect(),
    )?;
    if ch.noise_sigma == 0.0 {
        return apply_perturbation(v, &effective);
    }
    let normal = Normal::new(0.0, ch.noise_sigma)
        .map_err(|e| Error::validation(format!("invalid noise sigma: {}", e)))?;
    let mut rng = stream_rng(seed, 0);
    let lo = T::from_f64(dims.v_min).unwrap();
    let hi = T::from_f64(dims.v_max).unwrap();
    let frame_len = dims.h * dims.w * dims.c;
    let mut out = Vec::with_capacity(dims.video_len());
    for t in 0..dims.t {
        let frame = &v.data()[t * frame_len..(t + 1) * frame_len];
        for (i, &x) in frame.iter().enumerate() {
            let offset = effective.get(t, i % dims.c);
            let noisy = x + offset + cast::<T>(normal.sample(&mut rng));
            out.push(noisy.min(hi).max(lo));
        }
    }
    VideoTensor::new(*dims, out)
}

/// Estimate the chromatic matrix, ambient offset and rise step from probe
/// responses by nested least squares: for a candidate alpha, smooth each
/// sent trace with the cyclic EMA, fit `observed = M * smoothed + b`
/// linearly, and search alpha by golden section on the residual.
///
/// The probes must excite all three channels (e.g. one single-channel pulse
/// trace per channel); otherwise the design is rank deficient.
pub fn calibrate(records: &[CalibrationRecord]) -> Result<ChannelEstimate> {
    if records.is_empty() {
        return Err(Error::Calibration("no calibration records".to_string()));
    }
    for r in records {
        r.validate()?;
    }
    // rank check on the raw sent traces: they must span all three channels
    let mut gram = [0.0f64; 9];
    for r in records {
        for frame in &r.sent {
            for i in 0..3 {
                for j in 0..3 {
                    gram[i * 3 + j] += frame[i] * frame[j];
                }
            }
        }
    }
    let det = gram[0] * (gram[4] * gram[8] - gram[5] * gram[7])
        - gram[1] * (gram[3] * gram[8] - gram[5] * gram[6])
        + gram[2] * (gram[3] * gram[7] - gram[4] * gram[6]);
    let trace = gram[0] + gram[4] + gram[8];
    if trace <= 0.0 || det.abs() <= 1e-12 * trace.powi(3).max(1e-300) {
        return Err(Error::Calibration(
            "probe set does not span all three channels".to_string(),
        ));
    }

    let fit = |alpha: f64| -> Result<(f64, [f64; 9], [f64; 3])> {
        // rows: one per (record, frame, output channel) triple shares the
        // smoothed input frame; solve each output channel independently.
        let mut design: Vec<f64> = Vec::new();
        let mut ys: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for r in records {
            let smoothed = cyclic_ema(&r.sent, alpha);
            for (frame, obs) in smoothed.iter().zip(&r.observed) {
                design.extend_from_slice(&[frame[0], frame[1], frame[2], 1.0]);
                for c in 0..3 {
                    ys[c].push(obs[c]);
                }
            }
        }
        let rows = ys[0].len();
        let mut m = [0.0f64; 9];
        let mut b = [0.0f64; 3];
        let mut sq = 0.0;
        for c in 0..3 {
            let x = least_squares(&design, &ys[c], rows, 4)
                .map_err(|e| Error::Calibration(format!("singular design: {}", e)))?;
            m[c * 3] = x[0];
            m[c * 3 + 1] = x[1];
            m[c * 3 + 2] = x[2];
            b[c] = x[3];
            for row in 0..rows {
                let pred = design[row * 4] * x[0]
                    + design[row * 4 + 1] * x[1]
                    + design[row * 4 + 2] * x[2]
                    + x[3];
                sq += (pred - ys[c][row]).powi(2);
            }
        }
        Ok(((sq / (3.0 * rows as f64)).sqrt(), m, b))
    };

    // coarse grid over (0, 1], then golden-section refinement
    let mut best_alpha = 1.0;
    let mut best = fit(1.0)?;
    for i in 1..=64 {
        let alpha = i as f64 / 64.0;
        let candidate = fit(alpha)?;
        if candidate.0 < best.0 {
            best = candidate;
            best_alpha = alpha;
        }
    }
    let (mut lo, mut hi) = ((best_alpha - 1.0 / 64.0).max(1e-6), (best_alpha + 1.0 / 64.0).min(1.0));
    let phi = 0.618_033_988_749_894_9_f64;
    for _ in 0..80 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if fit(a)?.0 < fit(b)?.0 {
            hi = b;
        } else {
            lo = a;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let refined = fit(alpha)?;
    if refined.0 < best.0 {
        best = refined;
        best_alpha = alpha;
    }
    let (rms_residual, crosstalk, ambient) = best;
    Ok(ChannelEstimate {
        crosstalk,
        rise_alpha: best_alpha,
        ambient,
        rms_residual,
    })
}

/// Invert the calibrated chromatic map per frame so the channel's chromatic
/// stage reproduces the intended trace. Temporal dynamics are deliberately
/// not inverted. Fails when the map's condition number exceeds 1e6.
pub fn precompensate<T: Scalar>(
    delta: &Perturbation<T>,
    crosstalk: &[f64; 9],
) -> Result<Perturbation<T>> {
    let cond = cond_3x3(crosstalk)
        .map_err(|e| Error::validation(format!("chromatic map not invertible: {}", e)))?;
    if cond >= 1e6 {
        return Err(Error::validation(format!(
            "chromatic map too ill-conditioned to invert (cond ~ {:.3e})",
            cond
        )));
    }
    let inv = invert_3x3(crosstalk)?;
    let dims = delta.dims();
    let mut trace = Vec::with_capacity(dims.trace_len());
    for t in 0..dims.t {
        let mut cmd = [0.0; 3];
        for (c, v) in cmd.iter_mut().enumerate() {
            *v = delta.get(t, c).to_f64().unwrap();
        }
        for r in 0..3 {
            let mut acc = 0.0;
            for c in 0..3 {
                acc += inv[r * 3 + c] * cmd[c];
            }
            trace.push(cast::<T>(acc));
        }
    }
    Perturbation::new(*dims, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{metric_roughness, roll_perturbation};
    use crate::rng::stream_rng;
    use crate::video::Dims;
    use rand::Rng;

    fn dims(t: usize) -> Dims {
        Dims::new(t, 3, 3, -1.0, 1.0).unwrap()
    }

    fn random_trace(d: Dims, seed: u64, amp: f64) -> Perturbation<f64> {
        let mut rng = stream_rng(seed, 0);
        Perturbation::new(
            d,
            (0..d.trace_len()).map(|_| rng.gen_range(-amp..amp)).collect(),
        )
        .unwrap()
    }

    fn random_video(d: Dims, seed: u64) -> VideoTensor<f64> {
        let mut rng = stream_rng(seed, 1);
        VideoTensor::new(
            d,
            (0..d.video_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_channel_equals_apply_perturbation() {
        let d = dims(5);
        let v = random_video(d, 3);
        let p = random_trace(d, 4, 0.4);
        let through = transmit(&v, &p, &ChannelModel::identity(), 99).unwrap();
        let direct = apply_perturbation(&v, &p).unwrap();
        assert_eq!(through, direct);
    }

    #[test]
    fn zero_trace_noiseless_channel_is_identity_on_video() {
        let d = dims(4);
        let v = random_video(d, 7);
        let p = Perturbation::<f64>::zeros(d).unwrap();
        let out = transmit(&v, &p, &ChannelModel::identity(), 0).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn cyclic_ema_matches_long_recurrence() {
        // direct oracle: iterate the recurrence for many periods from zero
        let input = vec![[1.0, 0.0, -0.5], [0.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.0, 0.0]];
        let alpha = 0.5;
        let closed = cyclic_ema(&input, alpha);
        let mut s = [0.0; 3];
        let mut latest = vec![[0.0; 3]; 4];
        for _ in 0..200 {
            for (t, frame) in input.iter().enumerate() {
                for c in 0..3 {
                    s[c] = (1.0 - alpha) * s[c] + alpha * frame[c];
                }
                latest[t] = s;
            }
        }
        for t in 0..4 {
            for c in 0..3 {
                assert!(
                    (closed[t][c] - latest[t][c]).abs() < 1e-12,
                    "t={} c={}: {} vs {}",
                    t,
                    c,
                    closed[t][c],
                    latest[t][c]
                );
            }
        }
    }

    #[test]
    fn ema_step_response_hand_check() {
        // step commanded on channel 0 of frame 0 only, alpha = 0.5, T = 4:
        // steady-state weights alpha (1-alpha)^k / (1 - (1-alpha)^T)
        let input = vec![[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3], [0.0; 3]];
        let out = cyclic_ema(&input, 0.5);
        let denom = 1.0 - 0.5f64.powi(4);
        for (t, expected_w) in [(0, 0.5), (1, 0.25), (2, 0.125), (3, 0.0625)] {
            assert!((out[t][0] - expected_w / denom).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_never_raises_roughness() {
        for seed in 0..40u64 {
            let d = dims(6);
            let p = random_trace(d, seed, 0.5);
            let mut rng = stream_rng(seed, 9);
            let ch = ChannelModel {
                rise_alpha: rng.gen_range(0.05..=1.0),
                phase: rng.gen_range(-3..3),
                ..ChannelModel::identity()
            };
            let offsets = channel_offsets(&p, &ch).unwrap();
            let out = Perturbation::new(
                d,
                offsets.iter().flat_map(|f| f.iter().copied()).collect(),
            )
            .unwrap();
            let before = metric_roughness(&p).unwrap();
            let after = metric_roughness(&out).unwrap();
            assert!(
                after <= before + 1e-12,
                "seed {}: {} > {}",
                seed,
                after,
                before
            );
        }
    }

    #[test]
    fn phase_just_rolls_offsets() {
        let d = dims(5);
        let p = random_trace(d, 21, 0.3);
        let base = ChannelModel {
            rise_alpha: 0.6,
            ..ChannelModel::identity()
        };
        let shifted_ch = ChannelModel { phase: 2, ..base };
        let plain = channel_offsets(&p, &base).unwrap();
        let shifted = channel_offsets(&p, &shifted_ch).unwrap();
        let plain_p = Perturbation::new(d, plain.iter().flat_map(|f| f.iter().copied()).collect()).unwrap();
        let rolled = roll_perturbation(&plain_p, 2);
        let shifted_flat: Vec<f64> = shifted.iter().flat_map(|f| f.iter().copied()).collect();
        assert_eq!(rolled.trace(), shifted_flat.as_slice());
    }

    fn synthesize_records(ch: &ChannelModel, t: usize, amp: f64) -> Vec<CalibrationRecord> {
        // one pulse trace per channel
        (0..3)
            .map(|c| {
                let mut sent = vec![[0.0; 3]; t];
                sent[0][c] = amp;
                sent[t / 2][c] = -amp * 0.5;
                let mut driven = vec![[0.0; 3]; t];
                for (frame, cmd) in driven.iter_mut().zip(&sent) {
                    for r in 0..3 {
                        let mut acc = ch.ambient[r];
                        for cc in 0..3 {
                            acc += ch.crosstalk[r * 3 + cc] * cmd[cc];
                        }
                        frame[r] = acc;
                    }
                }
                let observed = cyclic_ema(&driven, ch.rise_alpha);
                CalibrationRecord { sent, observed }
            })
            .collect()
    }

    #[test]
    fn calibration_recovers_known_channel() {
        let ch = ChannelModel {
            crosstalk: [0.9, 0.08, 0.02, 0.05, 0.85, 0.06, 0.01, 0.1, 0.95],
            rise_alpha: 0.62,
            phase: 0,
            ambient: [0.02, -0.01, 0.005],
            noise_sigma: 0.0,
        };
        let records = synthesize_records(&ch, 12, 0.5);
        let est = calibrate(&records).unwrap();
        for i in 0..9 {
            assert!(
                (est.crosstalk[i] - ch.crosstalk[i]).abs() < 1e-6,
                "M[{}]: {} vs {}",
                i,
                est.crosstalk[i],
                ch.crosstalk[i]
            );
        }
        assert!((est.rise_alpha - ch.rise_alpha).abs() < 1e-4);
        for c in 0..3 {
            assert!((est.ambient[c] - ch.ambient[c]).abs() < 1e-6);
        }
        assert!(est.rms_residual < 1e-9);
    }

    #[test]
    fn identity_records_give_identity_estimate() {
        let ch = ChannelModel::identity();
        let records = synthesize_records(&ch, 8, 0.4);
        let est = calibrate(&records).unwrap();
        for i in 0..9 {
            let expected = if i % 4 == 0 { 1.0 } else { 0.0 };
            assert!((est.crosstalk[i] - expected).abs() < 1e-6);
        }
        assert!((est.rise_alpha - 1.0).abs() < 1e-4);
    }

    #[test]
    fn probes_missing_a_channel_fail_rank_check() {
        let ch = ChannelModel::identity();
        let mut records = synthesize_records(&ch, 8, 0.4);
        records.truncate(2); // drop the blue pulse
        assert!(matches!(calibrate(&records), Err(Error::Calibration(_))));
    }

    #[test]
    fn precompensation_identity_and_diagonal() {
        let d = dims(4);
        let p = random_trace(d, 31, 0.2);
        let eye = ChannelModel::identity().crosstalk;
        assert_eq!(precompensate(&p, &eye).unwrap(), p);
        let double = [2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0];
        let half = precompensate(&p, &double).unwrap();
        for (a, b) in half.trace().iter().zip(p.trace()) {
            assert!((a * 2.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn precompensation_round_trip_through_chromatic_stage() {
        let d = dims(6);
        let p = random_trace(d, 41, 0.3);
        let m = [0.92, 0.05, 0.03, 0.04, 0.9, 0.02, 0.02, 0.07, 0.88];
        let ch = ChannelModel {
            crosstalk: m,
            ..ChannelModel::identity()
        };
        let pre = precompensate(&p, &m).unwrap();
        let offsets = channel_offsets(&pre, &ch).unwrap();
        for t in 0..d.t {
            for c in 0..3 {
                assert!((offsets[t][c] - p.get(t, c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ill_conditioned_map_rejected() {
        let d = dims(4);
        let p = random_trace(d, 51, 0.2);
        let nearly_singular = [1.0, 1.0, 0.0, 1.0, 1.0 + 1e-9, 0.0, 0.0, 0.0, 1.0];
        assert!(precompensate(&p, &nearly_singular).is_err());
    }

    #[test]
    fn transmit_is_deterministic_per_seed() {
        let d = dims(4);
        let v = random_video(d, 61);
        let p = random_trace(d, 62, 0.3);
        let ch = ChannelModel {
            noise_sigma: 0.05,
            ..ChannelModel::identity()
        };
        let a = transmit(&v, &p, &ch, 7).unwrap();
        let b = transmit(&v, &p, &ch, 7).unwrap();
        let c = transmit(&v, &p, &ch, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
