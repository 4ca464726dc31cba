//! Floating-point abstraction shared by the likelihood kernel.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real scalar the probit kernel can be evaluated in (`f32` or `f64`).
///
/// The complementary error function is not part of `num_traits::Float`, so
/// each concrete type supplies one from `libm`.
pub trait Scalar: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    fn erfc(self) -> Self;

    /// Lossy literal conversion, used for algorithm constants.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl Scalar for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}
