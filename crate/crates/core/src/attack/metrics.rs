//! Perturbation metrics and fooling-ratio evaluation.

use super::ops::{apply_perturbation, roll_perturbation, temporal_diff1};
use crate::error::{Error, Result};
use crate::net::{forward, ModelParams};
use crate::rng::stream_rng;
use crate::scalar::{cast, Scalar};
use crate::video::{LabeledVideo, Perturbation};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Mean absolute perturbation per pixel (gray-level units): `|delta|_1 / 3T`.
pub fn metric_thickness<T: Scalar>(delta: &Perturbation<T>) -> T {
    let sum = delta.trace().iter().fold(T::zero(), |a, &x| a + x.abs());
    sum / cast::<T>(delta.dims().trace_len() as f64)
}

/// Mean absolute first temporal difference per pixel: `|d1(delta)|_1 / 3T`.
pub fn metric_roughness<T: Scalar>(delta: &Perturbation<T>) -> Result<T> {
    let d1 = temporal_diff1(delta.trace(), delta.dims().t)?;
    let sum = d1.iter().fold(T::zero(), |a, &x| a + x.abs());
    Ok(sum / cast::<T>(delta.dims().trace_len() as f64))
}

/// Express a gray-level quantity as percent of the intensity range.
pub fn to_percent<T: Scalar>(value: T, dims: &crate::video::Dims) -> T {
    value / cast::<T>(dims.range()) * cast::<T>(100.0)
}

/// Thickness, roughness and l-infinity of a trace, as percents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub thickness_pct: f64,
    pub roughness_pct: f64,
    pub linf_pct: f64,
}

impl MetricsReport {
    pub fn of<T: Scalar>(delta: &Perturbation<T>) -> Result<Self> {
        let dims = delta.dims();
        Ok(MetricsReport {
            thickness_pct: to_percent(metric_thickness(delta), dims).to_f64().unwrap(),
            roughness_pct: to_percent(metric_roughness(delta)?, dims).to_f64().unwrap(),
            linf_pct: to_percent(delta.linf(), dims).to_f64().unwrap(),
        })
    }
}

/// How the trace is phase-aligned with clips during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TauMode {
    /// No shift: the trace plays in sync with the clip.
    Synchronized,
    /// A fresh uniform shift per clip.
    Random { seed: u64 },
    /// Average the fooling ratio over every possible shift.
    SweepAll,
}

fn fooled<T: Scalar>(
    params: &ModelParams<T>,
    lv: &LabeledVideo<T>,
    delta: &Perturbation<T>,
    tau: i64,
) -> Result<bool> {
    let shifted = if tau == 0 {
        delta.clone()
    } else {
        roll_perturbation(delta, tau)
    };
    let adv = apply_perturbation(&lv.video, &shifted)?;
    Ok(forward(params, &adv)?.top_class != lv.label)
}

/// Fraction of clips misclassified after applying the (possibly shifted)
/// trace. Callers are expected to pass a clean-filtered evaluation set —
/// clips the model already gets right without the perturbation.
pub fn fooling_ratio<T: Scalar>(
    params: &ModelParams<T>,
    eval_set: &[LabeledVideo<T>],
    delta: &Perturbation<T>,
    tau_mode: TauMode,
) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(Error::validation("empty evaluation set".to_string()));
    }
    use rayon::prelude::*;
    match tau_mode {
        TauMode::Synchronized => {
            let hits: Vec<Result<bool>> = eval_set
                .par_iter()
                .map(|lv| fooled(params, lv, delta, 0))
                .collect();
            let mut n = 0usize;
            for h in hits {
                if h? {
                    n += 1;
                }
            }
            Ok(n as f64 / eval_set.len() as f64)
        }
        TauMode::Random { seed } => {
            let t = delta.dims().t as i64;
            let taus: Vec<i64> = {
                let mut rng = stream_rng(seed, 0);
                (0..eval_set.len()).map(|_| rng.gen_range(1..=t)).collect()
            };
            let hits: Vec<Result<bool>> = eval_set
                .par_iter()
                .zip(&taus)
                .map(|(lv, &tau)| fooled(params, lv, delta, tau))
                .collect();
            let mut n = 0usize;
            for h in hits {
                if h? {
                    n += 1;
                }
            }
            Ok(n as f64 / eval_set.len() as f64)
        }
        TauMode::SweepAll => {
            let per_shift = fooling_per_shift(params, eval_set, delta)?;
            Ok(per_shift.iter().sum::<f64>() / per_shift.len() as f64)
        }
    }
}

/// Fooling ratio for each of the `T` cyclic shifts separately.
pub fn fooling_per_shift<T: Scalar>(
    params: &ModelParams<T>,
    eval_set: &[LabeledVideo<T>],
    delta: &Perturbation<T>,
) -> Result<Vec<f64>> {
    if eval_set.is_empty() {
        return Err(Error::validation("empty evaluation set".to_string()));
    }
    use rayon::prelude::*;
    let t = delta.dims().t;
    let jobs: Vec<(usize, usize)> = (0..t)
        .flat_map(|tau| (0..eval_set.len()).map(move |i| (tau, i)))
        .collect();
    let hits: Vec<Result<bool>> = jobs
        .par_iter()
        .map(|&(tau, i)| fooled(params, &eval_set[i], delta, tau as i64))
        .collect();
    let mut per_shift = vec![0.0f64; t];
    for (job, hit) in jobs.iter().zip(hits) {
        if hit? {
            per_shift[job.0] += 1.0;
        }
    }
    for v in per_shift.iter_mut() {
        *v /= eval_set.len() as f64;
    }
    Ok(per_shift)
}

/// Per-class fooling counts: `(class, fooled, total)` under a fixed tau mode.
pub fn fooling_per_class<T: Scalar>(
    params: &ModelParams<T>,
    eval_set: &[LabeledVideo<T>],
    delta: &Perturbation<T>,
    tau_mode: TauMode,
    num_classes: usize,
) -> Result<Vec<(usize, usize, usize)>> {
    if eval_set.is_empty() {
        return Err(Error::validation("empty evaluation set".to_string()));
    }
    let taus: Vec<i64> = match tau_mode {
        TauMode::Synchronized => vec![0; eval_set.len()],
        TauMode::Random { seed } => {
            let t = delta.dims().t as i64;
            let mut rng = stream_rng(seed, 0);
            (0..eval_set.len()).map(|_| rng.gen_range(1..=t)).collect()
        }
        TauMode::SweepAll => {
            return Err(Error::validation(
                "per-class breakdown is defined for synchronized or random shifts".to_string(),
            ))
        }
    };
    use rayon::prelude::*;
    let hits: Vec<Result<bool>> = eval_set
        .par_iter()
        .zip(&taus)
        .map(|(lv, &tau)| fooled(params, lv, delta, tau))
        .collect();
    let mut rows: Vec<(usize, usize, usize)> = (0..num_classes).map(|k| (k, 0, 0)).collect();
    for (lv, hit) in eval_set.iter().zip(hits) {
        rows[lv.label].2 += 1;
        if hit? {
            rows[lv.label].1 += 1;
        }
    }
    Ok(rows)
}
