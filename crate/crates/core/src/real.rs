//! Scalar abstraction shared by every numeric module.

use std::fmt;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// Built on nalgebra's `RealField` so the small dense matrix routines work
/// for either precision, with `num-traits` conversions for literals and
/// reporting.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + fmt::Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn of(v: f64) -> Self {
        // f32/f64 conversions from f64 never fail (they round or saturate).
        Self::from_f64(v).expect("f64 converts to every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Squared Euclidean norm of a slice.
#[inline]
pub fn norm_sq<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v * v)
}

#[inline]
pub fn norm<T: Real>(x: &[T]) -> T {
    norm_sq(x).sqrt()
}

#[inline]
pub fn all_finite<T: Real>(x: &[T]) -> bool {
    x.iter().all(|v| v.is_finite())
}
