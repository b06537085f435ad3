//! Scalar abstraction over the float types the kernel runs on.
//!
//! Production inference and training run in `f32`; the finite-difference
//! gradient oracle runs the identical code in `f64`.

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the tensor kernel is generic over.
///
/// Implemented for `f32` and `f64` only.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Default + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
