//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type the library is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal or parameter into this type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts into every supported scalar")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize converts into every supported scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("supported scalars convert into f64")
    }

    /// Tolerance for quantities that should agree to about 1e-10 relative,
    /// widened to a few ulps for low-precision scalars.
    fn tight_tol() -> Self {
        Self::of(1e-10).max(Self::epsilon() * Self::of(64.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm_sq<T: Scalar>(a: &[T]) -> T {
    a.iter().map(|&x| x * x).sum()
}
