//! Scalar abstraction: the numeric element type of every tensor.

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar: `f32` or `f64`.
///
/// File formats fix their own storage width (`f32` clip payloads, `f64`
/// parameters) regardless of the in-memory scalar; loaders and savers cast
/// through the format width.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + std::fmt::Debug
    + std::fmt::Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for converting an `f64` constant into `T`.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}
