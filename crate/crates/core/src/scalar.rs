//! Scalar abstraction: every numeric routine in this crate is generic over a
//! floating-point type. Production paths run `f32`; oracles and strict
//! verification run `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar for cache entries and attention math.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` into the scalar type.
#[inline]
pub fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 is representable in every Scalar")
}

/// Widen a scalar back to `f64` for reporting and tolerance checks.
#[inline]
pub fn widen<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("Scalar widens to f64")
}
