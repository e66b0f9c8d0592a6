//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// floating point: f32 or f64
pub trait Real:
    RealField
    + Copy
    + Default
    + Debug
    + Display
    + ToPrimitive
    + FromPrimitive
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lossy conversion from an `f64` literal.
#[inline]
pub fn lit<T: Real>(value: f64) -> T {
    nalgebra::convert(value)
}

#[inline]
pub fn to_f64<T: Real>(value: T) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn from_usize<T: Real>(value: usize) -> T {
    T::from_usize(value).unwrap_or_else(T::zero)
}
