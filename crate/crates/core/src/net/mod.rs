//! Differentiable 3D-conv video classifier.
//!
//! The layer vocabulary is fixed (conv3d, ReLU, global mean pool, affine,
//! softmax on top) and reverse mode works over a recorded tape of layer
//! inputs, not a general expression graph. Gradients are exact; the one
//! convention worth calling out is that the ReLU subgradient at 0 is 0.

pub mod conv;
pub mod train;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scalar::{cast, Scalar};
use crate::video::{Dims, LabeledVideo, VideoTensor};
use conv::{ConvGeom, Grid};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Architecture identifier. Two fixed variants share the input shape so
/// perturbations developed on one can be evaluated on the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchId {
    /// conv3d(3->8, 3x3x3) / ReLU / conv3d(8->16, 3x3x3, spatial stride 2)
    /// / ReLU / global mean pool / affine(16->K).
    A,
    /// conv3d(3->12, 3x5x5) / ReLU / conv3d(12->12, 3x3x3, spatial stride 2)
    /// / ReLU / global mean pool / affine(12->K).
    B,
}

impl ArchId {
    pub fn code(self) -> u32 {
        match self {
            ArchId::A => 0,
            ArchId::B => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(ArchId::A),
            1 => Ok(ArchId::B),
            _ => Err(Error::validation(format!("unknown architecture id {}", code))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T: Scalar> {
    pub geom: ConvGeom,
    /// `[out][kt][kh][kw][in]`, row major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T: Scalar> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`, row major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T: Scalar> {
    Conv3d(Conv3d<T>),
    Relu,
    GlobalMeanPool,
    Affine(Affine<T>),
}

/// Shape of an activation between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Tensor(Grid),
    Vector(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match self {
            Shape::Tensor(g) => g.len(),
            Shape::Vector(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Classifier parameters: an architecture id plus its layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar> {
    pub arch: ArchId,
    pub dims: Dims,
    pub num_classes: usize,
    pub layers: Vec<Layer<T>>,
}

/// Classifier output for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T: Scalar> {
    pub logits: Vec<T>,
    /// softmax(logits); sums to 1 within 1e-9.
    pub probabilities: Vec<T>,
    /// argmax of probabilities, lowest index on exact tie.
    pub top_class: usize,
}

/// Scalar loss attached on top of the logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSpec {
    /// Sum of all logits (diagnostic).
    SumLogits,
    /// Softmax cross-entropy. `None` means "each clip's own label" in batch
    /// operations and is invalid for single-clip gradient calls.
    CrossEntropy { label: Option<usize> },
}

/// Recorded layer inputs from one forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct Tape<T: Scalar> {
    entries: Vec<(Shape, Vec<T>)>,
    pub logits: Vec<T>,
    pub probabilities: Vec<T>,
}

/// Per-tensor parameter gradients in [`ModelParams::tensors`] order
/// (weights then bias for each parametric layer).
pub type ParamGrads<T> = Vec<Vec<T>>;

impl<T: Scalar> Layer<T> {
    fn out_shape(&self, input: Shape) -> Result<Shape> {
        match (self, input) {
            (Layer::Conv3d(c), Shape::Tensor(g)) => {
                if g.c != c.geom.in_ch {
                    return Err(Error::shape(format!(
                        "conv expects {} input channels, got {}",
                        c.geom.in_ch, g.c
                    )));
                }
                Ok(Shape::Tensor(c.geom.out_grid(g)))
            }
            (Layer::Relu, s) => Ok(s),
            (Layer::GlobalMeanPool, Shape::Tensor(g)) => Ok(Shape::Vector(g.c)),
            (Layer::Affine(a), Shape::Vector(n)) => {
                if n != a.in_features {
                    return Err(Error::shape(format!(
                        "affine expects {} features, got {}",
                        a.in_features, n
                    )));
                }
                Ok(Shape::Vector(a.out_features))
            }
            _ => Err(Error::shape("layer applied to wrong activation rank".to_string())),
        }
    }

    fn forward(&self, input_shape: Shape, input: &[T]) -> Result<(Shape, Vec<T>)> {
        let out_shape = self.out_shape(input_shape)?;
        let out = match self {
            Layer::Conv3d(c) => {
                let g = match input_shape {
                    Shape::Tensor(g) => g,
                    _ => unreachable!(),
                };
                let mut out = vec![T::zero(); out_shape.len()];
                conv::forward(input, g, &c.geom, &c.weights, &c.bias, &mut out);
                out
            }
            Layer::Relu => input.iter().map(|&x| x.max(T::zero())).collect(),
            Layer::GlobalMeanPool => {
                let g = match input_shape {
                    Shape::Tensor(g) => g,
                    _ => unreachable!(),
                };
                let cells = g.t * g.h * g.w;
                let scale = T::one() / cast::<T>(cells as f64);
                let mut out = vec![T::zero(); g.c];
                for cell in 0..cells {
                    let base = cell * g.c;
                    for c in 0..g.c {
                        out[c] = out[c] + input[base + c];
                    }
                }
                for v in out.iter_mut() {
                    *v = *v * scale;
                }
                out
            }
            Layer::Affine(a) => {
                let mut out = a.bias.clone();
                for (o, acc) in out.iter_mut().enumerate() {
                    let row = &a.weights[o * a.in_features..(o + 1) * a.in_features];
                    let mut dot = T::zero();
                    for i in 0..a.in_features {
                        dot = dot + row[i] * input[i];
                    }
                    *acc = *acc + dot;
                }
                out
            }
        };
        Ok((out_shape, out))
    }

    /// Backward through this layer. Returns d(input) unless `skip_data`,
    /// and pushes (dweights, dbias) onto `grads` for parametric layers.
    fn backward(
        &self,
        input_shape: Shape,
        input: &[T],
        dout: &[T],
        grads: Option<&mut Vec<(Vec<T>, Vec<T>)>>,
        skip_data: bool,
    ) -> Result<Option<Vec<T>>> {
        match self {
            Layer::Conv3d(c) => {
                let g = match input_shape {
                    Shape::Tensor(g) => g,
                    _ => unreachable!(),
                };
                if let Some(grads) = grads {
                    let mut dw = vec![T::zero(); c.weights.len()];
                    let mut db = vec![T::zero(); c.bias.len()];
                    conv::backward_filter(input, g, &c.geom, dout, &mut dw, &mut db);
                    grads.push((dw, db));
                }
                if skip_data {
                    return Ok(None);
                }
                let mut din = vec![T::zero(); input.len()];
                conv::backward_data(dout, g, &c.geom, &c.weights, &mut din);
                Ok(Some(din))
            }
            Layer::Relu => {
                if skip_data {
                    return Ok(None);
                }
                // subgradient at exactly 0 is 0
                Ok(Some(
                    input
                        .iter()
                        .zip(dout)
                        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                        .collect(),
                ))
            }
            Layer::GlobalMeanPool => {
                if skip_data {
                    return Ok(None);
                }
                let g = match input_shape {
                    Shape::Tensor(g) => g,
                    _ => unreachable!(),
                };
                let cells = g.t * g.h * g.w;
                let scale = T::one() / cast::<T>(cells as f64);
                let mut din = vec![T::zero(); input.len()];
                for cell in 0..cells {
                    let base = cell * g.c;
                    for c in 0..g.c {
                        din[base + c] = dout[c] * scale;
                    }
                }
                Ok(Some(din))
            }
            Layer::Affine(a) => {
                if let Some(grads) = grads {
                    let mut dw = vec![T::zero(); a.weights.len()];
                    let db = dout.to_vec();
                    for o in 0..a.out_features {
                        let row = &mut dw[o * a.in_features..(o + 1) * a.in_features];
                        for i in 0..a.in_features {
                            row[i] = input[i] * dout[o];
                        }
                    }
                    grads.push((dw, db));
                }
                if skip_data {
                    return Ok(None);
                }
                let mut din = vec![T::zero(); a.in_features];
                for o in 0..a.out_features {
                    let row = &a.weights[o * a.in_features..(o + 1) * a.in_features];
                    for i in 0..a.in_features {
                        din[i] = din[i] + row[i] * dout[o];
                    }
                }
                Ok(Some(din))
            }
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Build with fresh seeded parameters (He-normal convs, Xavier affine).
    pub fn init(arch: ArchId, dims: Dims, num_classes: usize, seed: u64) -> Result<Self> {
        dims.validate()?;
        if num_classes < 2 {
            return Err(Error::validation(format!(
                "num_classes must be >= 2, got {}",
                num_classes
            )));
        }
        let specs: Vec<LayerSpec> = arch_template(arch, num_classes);
        let mut layers = Vec::with_capacity(specs.len());
        for (li, spec) in specs.iter().enumerate() {
            let mut rng = stream_rng(seed, li as u64);
            layers.push(match *spec {
                LayerSpec::Conv(geom) => {
                    let fan_in = (geom.kernel.0 * geom.kernel.1 * geom.kernel.2 * geom.in_ch) as f64;
                    let std = (2.0 / fan_in).sqrt();
                    let weights = (0..geom.weight_len())
                        .map(|_| cast::<T>((rng.gen::<f64>() * 2.0 - 1.0) * std * 1.7320508))
                        .collect();
                    Layer::Conv3d(Conv3d {
                        geom,
                        weights,
                        bias: vec![T::zero(); geom.out_ch],
                    })
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Pool => Layer::GlobalMeanPool,
                LayerSpec::Affine { in_f, out_f } => {
                    let bound = (6.0 / (in_f + out_f) as f64).sqrt();
                    let weights = (0..in_f * out_f)
                        .map(|_| cast::<T>((rng.gen::<f64>() * 2.0 - 1.0) * bound))
                        .collect();
                    Layer::Affine(Affine {
                        in_features: in_f,
                        out_features: out_f,
                        weights,
                        bias: vec![T::zero(); out_f],
                    })
                }
            });
        }
        let params = ModelParams {
            arch,
            dims,
            num_classes,
            layers,
        };
        params.validate()?;
        Ok(params)
    }

    /// Check that the layer chain is internally consistent and terminates in
    /// `num_classes` logits for `dims`-shaped input.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let mut shape = Shape::Tensor(Grid {
            t: self.dims.t,
            h: self.dims.h,
            w: self.dims.w,
            c: self.dims.c,
        });
        for layer in &self.layers {
            match layer {
                Layer::Conv3d(c) => {
                    if c.weights.len() != c.geom.weight_len() || c.bias.len() != c.geom.out_ch {
                        return Err(Error::shape("conv parameter buffers mis-sized".to_string()));
                    }
                    let (kt, kh, kw) = c.geom.kernel;
                    if kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 {
                        return Err(Error::validation("conv kernels must be odd".to_string()));
                    }
                }
                Layer::Affine(a) => {
                    if a.weights.len() != a.in_features * a.out_features
                        || a.bias.len() != a.out_features
                    {
                        return Err(Error::shape("affine parameter buffers mis-sized".to_string()));
                    }
                }
                _ => {}
            }
            shape = layer.out_shape(shape)?;
        }
        if shape != Shape::Vector(self.num_classes) {
            return Err(Error::shape(format!(
                "layer stack produces {:?}, expected {} logits",
                shape, self.num_classes
            )));
        }
        for t in self.tensors() {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation("non-finite parameter value".to_string()));
            }
        }
        Ok(())
    }

    /// Parameter tensors in a fixed order: weights then bias per layer.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv3d(c) => {
                    out.push(c.weights.as_slice());
                    out.push(c.bias.as_slice());
                }
                Layer::Affine(a) => {
                    out.push(a.weights.as_slice());
                    out.push(a.bias.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv3d(c) => {
                    out.push(c.weights.as_mut_slice());
                    out.push(c.bias.as_mut_slice());
                }
                Layer::Affine(a) => {
                    out.push(a.weights.as_mut_slice());
                    out.push(a.bias.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    fn check_input(&self, v: &VideoTensor<T>) -> Result<()> {
        let d = v.dims();
        if d.t != self.dims.t || d.h != self.dims.h || d.w != self.dims.w || d.c != self.dims.c {
            return Err(Error::shape(format!(
                "clip is {}x{}x{}x{}, model expects {}x{}x{}x{}",
                d.t, d.h, d.w, d.c, self.dims.t, self.dims.h, self.dims.w, self.dims.c
            )));
        }
        Ok(())
    }
}

/// Template entry used by init and checkpoint validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv(ConvGeom),
    Relu,
    Pool,
    Affine { in_f: usize, out_f: usize },
}

/// Fixed layer template of an architecture.
pub fn arch_template(arch: ArchId, num_classes: usize) -> Vec<LayerSpec> {
    match arch {
        ArchId::A => vec![
            LayerSpec::Conv(ConvGeom {
                in_ch: 3,
                out_ch: 8,
                kernel: (3, 3, 3),
                stride: (1, 1, 1),
            }),
            LayerSpec::Relu,
            LayerSpec::Conv(ConvGeom {
                in_ch: 8,
                out_ch: 16,
                kernel: (3, 3, 3),
                stride: (1, 2, 2),
            }),
            LayerSpec::Relu,
            LayerSpec::Pool,
            LayerSpec::Affine {
                in_f: 16,
                out_f: num_classes,
            },
        ],
        ArchId::B => vec![
            LayerSpec::Conv(ConvGeom {
                in_ch: 3,
                out_ch: 12,
                kernel: (3, 5, 5),
                stride: (1, 1, 1),
            }),
            LayerSpec::Relu,
            LayerSpec::Conv(ConvGeom {
                in_ch: 12,
                out_ch: 12,
                kernel: (3, 3, 3),
                stride: (1, 2, 2),
            }),
            LayerSpec::Relu,
            LayerSpec::Pool,
            LayerSpec::Affine {
                in_f: 12,
                out_f: num_classes,
            },
        ],
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest element, lowest index on exact ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn prediction_from_logits<T: Scalar>(logits: Vec<T>) -> Prediction<T> {
    let probabilities = softmax(&logits);
    let top_class = argmax(&probabilities);
    Prediction {
        logits,
        probabilities,
        top_class,
    }
}

fn run_forward<T: Scalar>(
    params: &ModelParams<T>,
    v: &VideoTensor<T>,
    record: bool,
) -> Result<(Vec<T>, Option<Vec<(Shape, Vec<T>)>>)> {
    params.check_input(v)?;
    let mut shape = Shape::Tensor(Grid {
        t: params.dims.t,
        h: params.dims.h,
        w: params.dims.w,
        c: params.dims.c,
    });
    let mut data = v.data().to_vec();
    let mut tape = if record { Some(Vec::new()) } else { None };
    for layer in &params.layers {
        let (next_shape, next) = layer.forward(shape, &data)?;
        if let Some(tape) = tape.as_mut() {
            tape.push((shape, std::mem::take(&mut data)));
        }
        data = next;
        shape = next_shape;
    }
    Ok((data, tape))
}

/// Evaluate the classifier on one clip.
pub fn forward<T: Scalar>(params: &ModelParams<T>, v: &VideoTensor<T>) -> Result<Prediction<T>> {
    let (logits, _) = run_forward(params, v, false)?;
    Ok(prediction_from_logits(logits))
}

/// Evaluate and record the tape needed for backward passes.
pub fn forward_with_tape<T: Scalar>(
    params: &ModelParams<T>,
    v: &VideoTensor<T>,
) -> Result<(Prediction<T>, Tape<T>)> {
    let (logits, entries) = run_forward(params, v, true)?;
    let pred = prediction_from_logits(logits.clone());
    let tape = Tape {
        entries: entries.unwrap(),
        logits,
        probabilities: pred.probabilities.clone(),
    };
    Ok((pred, tape))
}

/// Backward pass from a logit-space upstream gradient.
///
/// Returns the gradient w.r.t. every input element when `want_input`, and
/// parameter gradients (in [`ModelParams::tensors`] order) when
/// `want_params`.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    tape: &Tape<T>,
    dlogits: &[T],
    want_input: bool,
    want_params: bool,
) -> Result<(Option<Vec<T>>, Option<ParamGrads<T>>)> {
    if dlogits.len() != params.num_classes {
        return Err(Error::shape(format!(
            "dlogits has {} entries, expected {}",
            dlogits.len(),
            params.num_classes
        )));
    }
    if tape.entries.len() != params.layers.len() {
        return Err(Error::shape("tape does not match layer stack".to_string()));
    }
    let mut dout = dlogits.to_vec();
    let mut rev_grads: Vec<(Vec<T>, Vec<T>)> = Vec::new();
    for (li, layer) in params.layers.iter().enumerate().rev() {
        let (in_shape, in_data) = &tape.entries[li];
        let skip_data = li == 0 && !want_input;
        let grads_slot = if want_params { Some(&mut rev_grads) } else { None };
        let din = layer.backward(*in_shape, in_data, &dout, grads_slot, skip_data)?;
        match din {
            Some(d) => dout = d,
            None => break,
        }
    }
    let input_grad = want_input.then_some(dout);
    let param_grads = want_params.then(|| {
        let mut flat: ParamGrads<T> = Vec::new();
        for (dw, db) in rev_grads.into_iter().rev() {
            flat.push(dw);
            flat.push(db);
        }
        flat
    });
    Ok((input_grad, param_grads))
}

/// Loss value and its gradient w.r.t. the logits.
pub fn loss_and_dlogits<T: Scalar>(
    spec: &LossSpec,
    logits: &[T],
    probabilities: &[T],
) -> Result<(T, Vec<T>)> {
    match spec {
        LossSpec::SumLogits => {
            let value = logits.iter().fold(T::zero(), |a, &b| a + b);
            Ok((value, vec![T::one(); logits.len()]))
        }
        LossSpec::CrossEntropy { label } => {
            let label = label.ok_or_else(|| {
                Error::validation("cross-entropy loss needs a concrete label here".to_string())
            })?;
            if label >= logits.len() {
                return Err(Error::validation(format!(
                    "label {} out of range for {} classes",
                    label,
                    logits.len()
                )));
            }
            // -log p via logsumexp for stability
            let max = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let lse = logits
                .iter()
                .fold(T::zero(), |a, &z| a + (z - max).exp())
                .ln()
                + max;
            let value = lse - logits[label];
            let mut d = probabilities.to_vec();
            d[label] = d[label] - T::one();
            Ok((value, d))
        }
    }
}

/// Exact gradient of `spec`'s scalar loss w.r.t. every input element.
pub fn grad_input<T: Scalar>(
    params: &ModelParams<T>,
    v: &VideoTensor<T>,
    spec: &LossSpec,
) -> Result<(T, Vec<T>)> {
    let (pred, tape) = forward_with_tape(params, v)?;
    let (value, dlogits) = loss_and_dlogits(spec, &pred.logits, &pred.probabilities)?;
    let (input_grad, _) = backward(params, &tape, &dlogits, true, false)?;
    Ok((value, input_grad.unwrap()))
}

/// Mean loss and mean parameter gradients over a batch. `CrossEntropy` with
/// `label: None` takes each clip's own label; reduction order is the batch
/// order regardless of how per-clip work is scheduled.
pub fn grad_params<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[&LabeledVideo<T>],
    spec: &LossSpec,
) -> Result<(T, ParamGrads<T>)> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch".to_string()));
    }
    use rayon::prelude::*;
    let per_clip: Vec<Result<(T, ParamGrads<T>)>> = batch
        .par_iter()
        .map(|lv| {
            let clip_spec = match spec {
                LossSpec::CrossEntropy { label: None } => LossSpec::CrossEntropy {
                    label: Some(lv.label),
                },
                other => *other,
            };
            let (pred, tape) = forward_with_tape(params, &lv.video)?;
            let (value, dlogits) = loss_and_dlogits(&clip_spec, &pred.logits, &pred.probabilities)?;
            let (_, param_grads) = backward(params, &tape, &dlogits, false, true)?;
            Ok((value, param_grads.unwrap()))
        })
        .collect();

    let inv_n = T::one() / cast::<T>(batch.len() as f64);
    let mut loss = T::zero();
    let mut acc: Option<ParamGrads<T>> = None;
    for item in per_clip {
        let (value, grads) = item?;
        loss = loss + value;
        match acc.as_mut() {
            None => acc = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (ai, &gi) in a.iter_mut().zip(g) {
                        *ai = *ai + gi;
                    }
                }
            }
        }
    }
    let mut grads = acc.unwrap();
    for tensor in grads.iter_mut() {
        for g in tensor.iter_mut() {
            *g = *g * inv_n;
        }
    }
    Ok((loss * inv_n, grads))
}
