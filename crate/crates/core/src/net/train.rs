//! Cross-entropy trainer for the video classifier.

use super::{forward, grad_params, ArchId, LossSpec, ModelParams};
use crate::error::{Error, Result};
use crate::opt::Adam;
use crate::rng::stream_rng;
use crate::scalar::{cast, Scalar};
use crate::video::LabeledVideo;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainConfig<T: Scalar> {
    pub learning_rate: T,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: T,
    pub adam_beta2: T,
    pub adam_epsilon: T,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    /// Defaults that reach the desk-scale accuracy gate comfortably.
    pub fn default_desk(seed: u64) -> Self {
        TrainConfig {
            learning_rate: cast(1e-2),
            batch_size: 8,
            epochs: 40,
            adam_beta1: cast(0.9),
            adam_beta2: cast(0.999),
            adam_epsilon: cast(1e-8),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(Error::validation("learning rate must be > 0".to_string()));
        }
        if self.batch_size < 1 {
            return Err(Error::validation("batch size must be >= 1".to_string()));
        }
        if self.epochs < 1 {
            return Err(Error::validation("epochs must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Record of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Train a fresh model of `arch` on `dataset`.
///
/// Deterministic for a fixed config: initialization, shuffling and batch
/// reduction order all derive from `cfg.seed`.
pub fn train<T: Scalar>(
    dataset: &[LabeledVideo<T>],
    arch: ArchId,
    num_classes: usize,
    cfg: &TrainConfig<T>,
) -> Result<(ModelParams<T>, Vec<EpochStats>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation("empty training set".to_string()));
    }
    for lv in dataset {
        if lv.label >= num_classes {
            return Err(Error::validation(format!(
                "label {} out of range for {} classes",
                lv.label, num_classes
            )));
        }
    }
    let dims = *dataset[0].video.dims();
    let mut params = ModelParams::init(arch, dims, num_classes, cfg.seed)?;
    let mut adam = Adam::new(
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_epsilon,
        &params.tensor_sizes(),
    );

    let spec = LossSpec::CrossEntropy { label: None };
    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0usize;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, 1 + epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledVideo<T>> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, grads) = grad_params(&params, &batch, &spec)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    iteration,
                    message: format!("non-finite loss {}", loss),
                });
            }
            let grad_slices: Vec<&[T]> = grads.iter().map(|g| g.as_slice()).collect();
            adam.step(&mut params.tensors_mut(), &grad_slices);
            epoch_loss += loss.to_f64().unwrap();
            batches += 1;
            iteration += 1;
        }
        stats.push(EpochStats {
            epoch,
            mean_loss: epoch_loss / batches as f64,
            train_accuracy: accuracy(&params, dataset)?,
        });
    }
    Ok((params, stats))
}

/// Fraction of clips whose top class matches the label.
pub fn accuracy<T: Scalar>(params: &ModelParams<T>, data: &[LabeledVideo<T>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::validation("empty evaluation set".to_string()));
    }
    use rayon::prelude::*;
    let hits: Vec<Result<bool>> = data
        .par_iter()
        .map(|lv| Ok(forward(params, &lv.video)?.top_class == lv.label))
        .collect();
    let mut correct = 0usize;
    for h in hits {
        if h? {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
