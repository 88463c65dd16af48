//! Optimization drivers: single-video, single-class and universal attacks,
//! optional time invariance, random baselines, and transfer evaluation.

use super::metrics::{
    fooling_per_class, fooling_ratio, metric_roughness, metric_thickness, to_percent, TauMode,
};
use super::objective::{objective, RegWeights};
use super::ops::{
    apply_perturbation, margin_loss, project_linf, roughness_reg, thickness_reg, MarginSpec,
};
use crate::error::{Error, Result};
use crate::io::model_fingerprint;
use crate::net::{forward, ModelParams};
use crate::opt::Adam;
use crate::rng::stream_rng;
use crate::scalar::{cast, Scalar};
use crate::video::{LabeledVideo, Perturbation};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackMode {
    /// One tailor-made trace per clip; the data must hold exactly one clip.
    SingleVideo,
    /// One trace for every clip of one class.
    SingleClass { class: usize },
    /// One trace for clips of any class.
    Universal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AttackConfig<T: Scalar> {
    pub mode: AttackMode,
    /// Train under fresh uniform cyclic shifts each iteration, so the trace
    /// stays adversarial at any playback phase.
    pub time_invariant: bool,
    pub margin: MarginSpec<T>,
    pub weights: RegWeights<T>,
    /// Optional l-infinity budget in gray levels; projected after every step.
    pub zeta: Option<T>,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: T,
    pub adam_beta1: T,
    pub adam_beta2: T,
    pub adam_epsilon: T,
    pub seed: u64,
    /// Evaluate (and checkpoint) every this many iterations.
    pub eval_every: usize,
}

impl<T: Scalar> AttackConfig<T> {
    /// Defaults in the style of the reference experiments: Adam at lr 1e-3,
    /// margin 0.05, lambda 1, beta1 = beta2 = 0.5, batch 8 for the
    /// generalization modes and 1 for single-video.
    pub fn default_for(mode: AttackMode, seed: u64) -> Self {
        let batch_size = match mode {
            AttackMode::SingleVideo => 1,
            _ => 8,
        };
        AttackConfig {
            mode,
            time_invariant: false,
            margin: MarginSpec::untargeted(cast(0.05), 0),
            weights: RegWeights::standard(),
            zeta: None,
            iterations: match mode {
                AttackMode::SingleVideo => 1000,
                _ => 1200,
            },
            batch_size,
            learning_rate: cast(1e-3),
            adam_beta1: cast(0.9),
            adam_beta2: cast(0.999),
            adam_epsilon: cast(1e-8),
            seed,
            eval_every: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::validation("iterations must be >= 1".to_string()));
        }
        if self.batch_size < 1 {
            return Err(Error::validation("batch size must be >= 1".to_string()));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(Error::validation("learning rate must be > 0".to_string()));
        }
        if let Some(z) = self.zeta {
            if !(z > T::zero()) {
                return Err(Error::validation(format!(
                    "l-infinity budget must be > 0, got {}",
                    z
                )));
            }
        }
        if self.eval_every < 1 {
            return Err(Error::validation("eval_every must be >= 1".to_string()));
        }
        self.weights.validate()
    }
}

/// One evaluation checkpoint during an attack run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    /// Full objective (regularizers + mean margin loss) over the attack data.
    pub loss: f64,
    /// Mean (over the attack data) of the top-class probability.
    pub top_class_prob: f64,
    /// Mean probability assigned to each clip's original class.
    pub original_class_prob: f64,
    pub thickness_pct: f64,
    pub roughness_pct: f64,
    pub fooling_ratio: f64,
}

/// Outcome of one attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult<T: Scalar> {
    /// Best-by-fooling-ratio checkpoint (ties broken by lower thickness).
    pub delta: Perturbation<T>,
    pub history: Vec<HistoryRecord>,
    pub config: AttackConfig<T>,
    pub model_fingerprint: String,
}

/// Evaluation summary of one trace against one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fooling_ratio: f64,
    pub thickness_pct: f64,
    pub roughness_pct: f64,
    pub tau_mode: TauMode,
    pub eval_size: usize,
    /// `(class, fooled, total)` rows; empty under sweep-all.
    pub per_class: Vec<(usize, usize, usize)>,
}

/// Synchronized full-data checkpoint: objective value, mean probabilities,
/// metrics and fooling ratio of the current trace.
fn evaluate_checkpoint<T: Scalar>(
    params: &ModelParams<T>,
    data: &[LabeledVideo<T>],
    delta: &Perturbation<T>,
    weights: &RegWeights<T>,
    spec: &MarginSpec<T>,
    iteration: usize,
) -> Result<HistoryRecord> {
    use rayon::prelude::*;
    let dims = delta.dims();
    let per_clip: Vec<Result<(f64, f64, f64, bool)>> = data
        .par_iter()
        .map(|lv| {
            let adv = apply_perturbation(&lv.video, delta)?;
            let pred = forward(params, &adv)?;
            let value = margin_loss(&pred, &spec.with_original(lv.label))?;
            Ok((
                value.to_f64().unwrap(),
                pred.probabilities[pred.top_class].to_f64().unwrap(),
                pred.probabilities[lv.label].to_f64().unwrap(),
                pred.top_class != lv.label,
            ))
        })
        .collect();
    let mut data_loss = 0.0;
    let mut top = 0.0;
    let mut orig = 0.0;
    let mut fooled = 0usize;
    for item in per_clip {
        let (value, t, o, f) = item?;
        data_loss += value;
        top += t;
        orig += o;
        if f {
            fooled += 1;
        }
    }
    let n = data.len() as f64;
    let reg = (weights.lambda
        * (weights.beta1 * thickness_reg(delta) + weights.beta2 * roughness_reg(delta)?))
    .to_f64()
    .unwrap();
    Ok(HistoryRecord {
        iteration,
        loss: reg + data_loss / n,
        top_class_prob: top / n,
        original_class_prob: orig / n,
        thickness_pct: to_percent(metric_thickness(delta), dims).to_f64().unwrap(),
        roughness_pct: to_percent(metric_roughness(delta)?, dims).to_f64().unwrap(),
        fooling_ratio: fooled as f64 / n,
    })
}

/// Run the attack optimization described by `cfg` against `params` on
/// `data`. The trace starts at zero, Adam steps on the combined objective,
/// the optional budget is re-projected after every step, and the returned
/// trace is the best evaluated checkpoint by fooling ratio (ties broken by
/// lower thickness). Deterministic in (model, data, cfg).
pub fn attack<T: Scalar>(
    params: &ModelParams<T>,
    data: &[LabeledVideo<T>],
    cfg: &AttackConfig<T>,
) -> Result<AttackResult<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::validation("attack data must be non-empty".to_string()));
    }
    match cfg.mode {
        AttackMode::SingleVideo => {
            if data.len() != 1 {
                return Err(Error::validation(format!(
                    "single-video mode needs exactly 1 clip, got {}",
                    data.len()
                )));
            }
        }
        AttackMode::SingleClass { class } => {
            if data.iter().any(|lv| lv.label != class) {
                return Err(Error::validation(format!(
                    "single-class mode for class {} got a clip of another class",
                    class
                )));
            }
        }
        AttackMode::Universal => {}
    }
    let dims = *data[0].video.dims();
    cfg.margin.validate(params.num_classes)?;

    let mut delta = Perturbation::<T>::zeros(dims)?;
    let mut adam = Adam::new(
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_epsilon,
        &[dims.trace_len()],
    );

    let mut history: Vec<HistoryRecord> = Vec::new();
    let rec = evaluate_checkpoint(params, data, &delta, &cfg.weights, &cfg.margin, 0)?;
    let mut best: Option<(f64, f64, Perturbation<T>)> =
        Some((rec.fooling_ratio, rec.thickness_pct, delta.clone()));
    history.push(rec);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len(); // force a shuffle on first use
    let mut epoch = 0u64;
    for iteration in 1..=cfg.iterations {
        // next batch: cycle through a seeded shuffle of the data
        let mut batch_idx = Vec::with_capacity(cfg.batch_size.min(data.len()));
        for _ in 0..cfg.batch_size.min(data.len()) {
            if cursor >= order.len() {
                let mut rng = stream_rng(cfg.seed, (1 << 32) | epoch);
                order.shuffle(&mut rng);
                cursor = 0;
                epoch += 1;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let batch: Vec<&LabeledVideo<T>> = batch_idx.iter().map(|&i| &data[i]).collect();

        let taus: Option<Vec<i64>> = if cfg.time_invariant {
            let mut rng = stream_rng(cfg.seed, (2 << 32) | iteration as u64);
            Some(
                batch
                    .iter()
                    .map(|_| rng.gen_range(1..=dims.t as i64))
                    .collect(),
            )
        } else {
            None
        };

        let (loss, grad) = objective(
            &delta,
            &batch,
            params,
            &cfg.weights,
            &cfg.margin,
            taus.as_deref(),
        )?;
        if !loss.is_finite() {
            return Err(Error::Optimization {
                iteration,
                message: format!("non-finite loss {}", loss),
            });
        }
        adam.step(&mut [delta.trace_mut()], &[grad.as_slice()]);
        if let Some(zeta) = cfg.zeta {
            delta = project_linf(&delta, zeta)?;
        }

        if iteration % cfg.eval_every == 0 || iteration == cfg.iterations {
            let rec =
                evaluate_checkpoint(params, data, &delta, &cfg.weights, &cfg.margin, iteration)?;
            let better = match &best {
                None => true,
                Some((fr, th, _)) => {
                    rec.fooling_ratio > *fr
                        || (rec.fooling_ratio == *fr && rec.thickness_pct < *th)
                }
            };
            if better {
                best = Some((rec.fooling_ratio, rec.thickness_pct, delta.clone()));
            }
            history.push(rec);
        }
    }

    let (_, _, best_delta) = best.unwrap();
    Ok(AttackResult {
        delta: best_delta,
        history,
        config: *cfg,
        model_fingerprint: model_fingerprint(params),
    })
}

/// Uniform baseline: i.i.d. elements on `[min(delta_ref), max(delta_ref)]`.
pub fn baseline_uniform<T: Scalar>(delta_ref: &Perturbation<T>, seed: u64) -> Perturbation<T> {
    let lo = delta_ref
        .trace()
        .iter()
        .fold(T::infinity(), |a, &x| a.min(x))
        .to_f64()
        .unwrap();
    let hi = delta_ref
        .trace()
        .iter()
        .fold(T::neg_infinity(), |a, &x| a.max(x))
        .to_f64()
        .unwrap();
    let mut rng = stream_rng(seed, 0);
    let trace = (0..delta_ref.trace().len())
        .map(|_| {
            if hi > lo {
                cast::<T>(rng.gen_range(lo..=hi))
            } else {
                cast::<T>(lo)
            }
        })
        .collect();
    Perturbation::new(*delta_ref.dims(), trace).expect("uniform draw within reference range")
}

/// Min-max baseline: each element is `min(delta_ref)` or `max(delta_ref)`
/// with equal probability.
pub fn baseline_minmax<T: Scalar>(delta_ref: &Perturbation<T>, seed: u64) -> Perturbation<T> {
    let lo = delta_ref
        .trace()
        .iter()
        .fold(T::infinity(), |a, &x| a.min(x));
    let hi = delta_ref
        .trace()
        .iter()
        .fold(T::neg_infinity(), |a, &x| a.max(x));
    let mut rng = stream_rng(seed, 0);
    let trace = (0..delta_ref.trace().len())
        .map(|_| if rng.gen::<bool>() { hi } else { lo })
        .collect();
    Perturbation::new(*delta_ref.dims(), trace).expect("min-max draw is finite")
}

/// Shuffle baseline: a uniform permutation of all trace elements, across
/// frames and channels.
pub fn baseline_shuffle<T: Scalar>(delta_ref: &Perturbation<T>, seed: u64) -> Perturbation<T> {
    let mut trace = delta_ref.trace().to_vec();
    let mut rng = stream_rng(seed, 0);
    trace.shuffle(&mut rng);
    Perturbation::new(*delta_ref.dims(), trace).expect("permutation preserves validity")
}

/// Evaluate a trace developed elsewhere against `target` (the transfer
/// protocol): same fooling procedure, plus the trace metrics.
pub fn transfer_eval<T: Scalar>(
    delta: &Perturbation<T>,
    target: &ModelParams<T>,
    eval_set: &[LabeledVideo<T>],
    tau_mode: TauMode,
) -> Result<EvalReport> {
    if !target.dims.trace_compatible(delta.dims()) {
        return Err(Error::validation(format!(
            "trace T/C {}x{} incompatible with target model input {}x{}",
            delta.dims().t,
            delta.dims().c,
            target.dims.t,
            target.dims.c
        )));
    }
    let dims = delta.dims();
    let per_class = match tau_mode {
        TauMode::SweepAll => Vec::new(),
        mode => fooling_per_class(target, eval_set, delta, mode, target.num_classes)?,
    };
    Ok(EvalReport {
        fooling_ratio: fooling_ratio(target, eval_set, delta, tau_mode)?,
        thickness_pct: to_percent(metric_thickness(delta), dims).to_f64().unwrap(),
        roughness_pct: to_percent(metric_roughness(delta)?, dims).to_f64().unwrap(),
        tau_mode,
        eval_size: eval_set.len(),
        per_class,
    })
}

/// Evaluate a trace against the model it was developed on.
pub fn self_eval<T: Scalar>(
    params: &ModelParams<T>,
    delta: &Perturbation<T>,
    eval_set: &[LabeledVideo<T>],
    tau_mode: TauMode,
) -> Result<EvalReport> {
    transfer_eval(delta, params, eval_set, tau_mode)
}

/// Drop the clips the model misclassifies without any perturbation.
/// Idempotent; returns the kept clips plus `(kept, total)`.
pub fn clean_filter<T: Scalar>(
    params: &ModelParams<T>,
    data: &[LabeledVideo<T>],
) -> Result<(Vec<LabeledVideo<T>>, usize, usize)> {
    use rayon::prelude::*;
    let keep: Vec<Result<bool>> = data
        .par_iter()
        .map(|lv| Ok(forward(params, &lv.video)?.top_class == lv.label))
        .collect();
    let mut kept = Vec::new();
    for (lv, k) in data.iter().zip(keep) {
        if k? {
            kept.push(lv.clone());
        }
    }
    let n = kept.len();
    Ok((kept, n, data.len()))
}
