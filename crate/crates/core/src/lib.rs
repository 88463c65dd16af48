//! Flickering adversarial perturbations against video classifiers.
//!
//! A flickering perturbation is a per-frame, spatially uniform RGB offset:
//! one `T x 3` trace added to every pixel of the matching frame. This crate
//! implements the full pipeline around that idea:
//!
//! * [`video`] / [`dataset`] / [`io`] — clip containers, a deterministic
//!   synthetic motion-video dataset, and the `FLKV`/`FLKP`/`FLKM` binary
//!   formats.
//! * [`net`] — a small differentiable 3D-conv video classifier with exact
//!   reverse-mode gradients for inputs and parameters, plus a trainer.
//! * [`attack`] — margin losses, thickness/roughness regularizers, the
//!   combined objective with its gradient w.r.t. the trace, metrics, and the
//!   optimization drivers (single-video / single-class / universal /
//!   time-invariant) with random baselines and transfer evaluation.
//! * [`ota`] — a bulb-to-camera channel simulator (chromatic crosstalk,
//!   finite rise time, frame desynchronization, ambient offset, sensor
//!   noise) with least-squares calibration and precompensation.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! concrete aliases live at the crate root. Every randomized operation takes
//! an explicit 64-bit seed; streams are ChaCha8 with SplitMix64-derived
//! per-task seeds (see [`rng`]), so results are reproducible and independent
//! of any parallel schedule.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod io;
pub mod linalg;
pub mod net;
pub mod opt;
pub mod ota;
pub mod rng;
pub mod scalar;
pub mod video;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` clip tensor (the default precision for gradient work).
pub type VideoF64 = video::VideoTensor<f64>;
/// `f32` clip tensor (matches the on-disk payload width).
pub type VideoF32 = video::VideoTensor<f32>;
/// `f64` perturbation trace.
pub type PerturbationF64 = video::Perturbation<f64>;
/// `f32` perturbation trace.
pub type PerturbationF32 = video::Perturbation<f32>;
/// `f64` classifier parameters.
pub type ModelF64 = net::ModelParams<f64>;
/// `f32` classifier parameters.
pub type ModelF32 = net::ModelParams<f32>;
