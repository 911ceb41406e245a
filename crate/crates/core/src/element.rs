//! Scalar element types the tape can run on.
//!
//! Training runs in `f32`; the finite-difference checker re-runs the same
//! code paths in `f64` to keep truncation noise below the check tolerance.

use num_traits::Float;

/// Floating-point element of a tensor. Implemented for `f32` and `f64`.
pub trait Element:
    Float + core::fmt::Debug + core::fmt::Display + core::iter::Sum + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
