//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumCast};

/// Floating point type the solver can be instantiated with (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FloatConst + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
}

/// Converts an `f64` literal into the working precision.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    <T as NumCast>::from(x).expect("literal representable in working precision")
}

/// Converts a count into the working precision.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    <T as NumCast>::from(n).expect("count representable in working precision")
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
