//! Clip and perturbation containers.
//!
//! A clip is a dense `T x H x W x C` tensor with every element inside
//! `[v_min, v_max]`; a flickering perturbation is a `T x C` trace that is
//! broadcast over each frame's spatial extent when applied.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Clip geometry and intensity range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    /// Frame count.
    pub t: usize,
    /// Rows.
    pub h: usize,
    /// Columns.
    pub w: usize,
    /// Color channels (always 3).
    pub c: usize,
    /// Minimum pixel intensity.
    pub v_min: f64,
    /// Maximum pixel intensity.
    pub v_max: f64,
}

impl Dims {
    pub fn new(t: usize, h: usize, w: usize, v_min: f64, v_max: f64) -> Result<Self> {
        let dims = Dims {
            t,
            h,
            w,
            c: 3,
            v_min,
            v_max,
        };
        dims.validate()?;
        Ok(dims)
    }

    /// Default desk-scale geometry: 16 frames of 32x32 RGB in `[-1, 1]`.
    pub fn desk_scale() -> Self {
        Dims {
            t: 16,
            h: 32,
            w: 32,
            c: 3,
            v_min: -1.0,
            v_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::validation(format!("T must be >= 2, got {}", self.t)));
        }
        if self.h < 1 || self.w < 1 {
            return Err(Error::validation(format!(
                "H and W must be >= 1, got {}x{}",
                self.h, self.w
            )));
        }
        if self.c != 3 {
            return Err(Error::validation(format!("C must be 3, got {}", self.c)));
        }
        if !(self.v_min < self.v_max) || !self.v_min.is_finite() || !self.v_max.is_finite() {
            return Err(Error::validation(format!(
                "invalid intensity range [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    /// Elements of a full clip tensor.
    pub fn video_len(&self) -> usize {
        self.t * self.h * self.w * self.c
    }

    /// Elements of a perturbation trace.
    pub fn trace_len(&self) -> usize {
        self.t * self.c
    }

    /// Width of the intensity range, `v_max - v_min`.
    pub fn range(&self) -> f64 {
        self.v_max - self.v_min
    }

    /// True when a perturbation sized for `other` applies to clips of `self`
    /// (same frame count and channel count).
    pub fn trace_compatible(&self, other: &Dims) -> bool {
        self.t == other.t && self.c == other.c
    }

    /// Flat index of `(t, h, w, c)`, t-major then h, w, c.
    #[inline]
    pub fn index(&self, t: usize, h: usize, w: usize, c: usize) -> usize {
        ((t * self.h + h) * self.w + w) * self.c + c
    }
}

/// Dense clip tensor; every element lies in `[v_min, v_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor<T: Scalar> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> VideoTensor<T> {
    pub fn new(dims: Dims, data: Vec<T>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.video_len() {
            return Err(Error::shape(format!(
                "video data length {} does not match dims {}x{}x{}x{}",
                data.len(),
                dims.t,
                dims.h,
                dims.w,
                dims.c
            )));
        }
        let lo = T::from_f64(dims.v_min).unwrap();
        let hi = T::from_f64(dims.v_max).unwrap();
        for (i, &x) in data.iter().enumerate() {
            if !(x >= lo && x <= hi) {
                return Err(Error::validation(format!(
                    "video element {} = {} outside [{}, {}]",
                    i, x, dims.v_min, dims.v_max
                )));
            }
        }
        Ok(VideoTensor { dims, data })
    }

    /// All elements at `v_min`.
    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let fill = T::from_f64(dims.v_min).unwrap();
        Ok(VideoTensor {
            data: vec![fill; dims.video_len()],
            dims,
        })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, t: usize, h: usize, w: usize, c: usize) -> T {
        self.data[self.dims.index(t, h, w, c)]
    }

    /// Consume into the raw buffer.
    pub fn into_data(self) -> Vec<T> {
        self.data
    }
}

/// A clip with its ground-truth class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVideo<T: Scalar> {
    pub video: VideoTensor<T>,
    pub label: usize,
}

impl<T: Scalar> LabeledVideo<T> {
    pub fn new(video: VideoTensor<T>, label: usize, num_classes: usize) -> Result<Self> {
        if label >= num_classes {
            return Err(Error::validation(format!(
                "label {} out of range for {} classes",
                label, num_classes
            )));
        }
        Ok(LabeledVideo { video, label })
    }
}

/// Flickering perturbation: one RGB offset per frame, broadcast spatially.
///
/// `dims` records the clip geometry the trace targets (the trace itself has
/// implied spatial extent 1x1); `trace` holds `T * C` finite values, frame
/// major then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T: Scalar> {
    dims: Dims,
    trace: Vec<T>,
}

impl<T: Scalar> Perturbation<T> {
    pub fn new(dims: Dims, trace: Vec<T>) -> Result<Self> {
        dims.validate()?;
        if trace.len() != dims.trace_len() {
            return Err(Error::shape(format!(
                "trace length {} does not match T*C = {}",
                trace.len(),
                dims.trace_len()
            )));
        }
        for (i, &x) in trace.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::validation(format!(
                    "trace element {} is not finite",
                    i
                )));
            }
        }
        Ok(Perturbation { dims, trace })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        Ok(Perturbation {
            trace: vec![T::zero(); dims.trace_len()],
            dims,
        })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn trace(&self) -> &[T] {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut [T] {
        &mut self.trace
    }

    /// Offset of channel `c` in frame `t`.
    #[inline]
    pub fn get(&self, t: usize, c: usize) -> T {
        self.trace[t * self.dims.c + c]
    }

    pub fn into_trace(self) -> Vec<T> {
        self.trace
    }

    /// Largest absolute trace value.
    pub fn linf(&self) -> T {
        self.trace
            .iter()
            .fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_invariants_enforced() {
        assert!(Dims::new(1, 8, 8, -1.0, 1.0).is_err());
        assert!(Dims::new(4, 0, 8, -1.0, 1.0).is_err());
        assert!(Dims::new(4, 8, 8, 1.0, -1.0).is_err());
        let mut d = Dims::desk_scale();
        d.c = 4;
        assert!(d.validate().is_err());
    }

    #[test]
    fn video_rejects_out_of_range() {
        let dims = Dims::new(2, 1, 1, -1.0, 1.0).unwrap();
        let ok = VideoTensor::new(dims, vec![0.0_f64; 6]);
        assert!(ok.is_ok());
        let mut data = vec![0.0_f64; 6];
        data[3] = 1.5;
        assert!(matches!(
            VideoTensor::new(dims, data),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn video_rejects_bad_length() {
        let dims = Dims::new(2, 1, 1, -1.0, 1.0).unwrap();
        assert!(matches!(
            VideoTensor::<f64>::new(dims, vec![0.0; 5]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn perturbation_rejects_non_finite() {
        let dims = Dims::new(2, 1, 1, -1.0, 1.0).unwrap();
        let mut trace = vec![0.0_f64; 6];
        trace[2] = f64::NAN;
        assert!(Perturbation::new(dims, trace).is_err());
    }

    #[test]
    fn label_bound_checked() {
        let dims = Dims::new(2, 1, 1, -1.0, 1.0).unwrap();
        let v = VideoTensor::<f64>::zeros(dims).unwrap();
        assert!(LabeledVideo::new(v.clone(), 5, 6).is_ok());
        assert!(LabeledVideo::new(v, 6, 6).is_err());
    }
}
