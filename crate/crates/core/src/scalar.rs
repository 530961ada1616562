//! Scalar abstraction for the analytic models.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the scaling models are evaluated in: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from `f64`, used for literal constants.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    /// Converts an integer core count.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("core count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
