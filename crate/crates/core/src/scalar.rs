use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the geometry layer is generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts an integer count into the scalar type.
    #[inline]
    fn count(k: usize) -> Self {
        Self::from_usize(k).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `arccosh(1 + delta)` for `delta >= 0`, without cancellation near zero.
///
/// Below `delta = 1e-8` the two-term expansion
/// `sqrt(2 delta) (1 - delta/12 + 3 delta^2/160)` is used.
#[inline]
pub fn acosh1p<T: Scalar>(delta: T) -> T {
    if delta <= T::zero() {
        return T::zero();
    }
    if delta < T::lit(1e-8) {
        let two = T::lit(2.0);
        return (two * delta).sqrt()
            * (T::one() - delta / T::lit(12.0) + T::lit(3.0) * delta * delta / T::lit(160.0));
    }
    (delta + (delta * (T::lit(2.0) + delta)).sqrt()).ln_1p()
}
