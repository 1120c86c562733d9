use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type the whole engine is generic over.
///
/// Training and inference run on `f32`; the gradient checks instantiate the
/// same code paths on `f64` so finite differences are not swamped by rounding.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` constant.
    #[inline]
    fn c(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite constant")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::c(v as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
