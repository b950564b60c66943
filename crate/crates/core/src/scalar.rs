//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All math is written against [`Real`], which is satisfied by `f32` and
//! `f64`. Tolerances that are quoted for double precision are widened for
//! single precision through [`tol`].

use std::fmt::LowerExp;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the library: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + LowerExp {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + LowerExp {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts a working scalar into `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

/// A double precision tolerance, floored at a multiple of the machine
/// epsilon of `T` so the same check stays meaningful in single precision.
#[inline]
pub fn tol<T: Real>(double_tol: f64) -> T {
    let eps = to_f64(T::default_epsilon());
    lit(double_tol.max(1e3 * eps))
}
