//! Scalar abstractions.
//!
//! [`Real`] is the floating-point scalar every analytic computation runs on
//! (jets, metrics, curvature). [`Field`] is the weaker contract used by the
//! linear slice machinery, which only needs field operations and an exact or
//! tolerance-based zero test, so it also admits exact rationals.

use std::fmt::{Debug, Display, LowerExp};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, One, Signed, ToPrimitive, Zero};

/// floating point: f32 or f64
pub trait Real:
    Field + Float + FromPrimitive + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or parameter value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A field with enough structure for Gaussian elimination.
///
/// `magnitude` is used only to choose pivots; `is_negligible` decides when a
/// pivot counts as zero. Exact types ignore the tolerance.
pub trait Field:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn magnitude(&self) -> f64;

    fn is_negligible(&self, scale: f64, tol: f64) -> bool;

    fn from_f64_value(x: f64) -> Option<Self>;

    fn approx_f64(&self) -> f64;
}

impl Field for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }

    fn is_negligible(&self, scale: f64, tol: f64) -> bool {
        self.abs() <= tol * scale
    }

    fn from_f64_value(x: f64) -> Option<Self> {
        Some(x)
    }

    fn approx_f64(&self) -> f64 {
        *self
    }
}

impl Field for f32 {
    fn magnitude(&self) -> f64 {
        self.abs() as f64
    }

    fn is_negligible(&self, scale: f64, tol: f64) -> bool {
        (self.abs() as f64) <= tol.max(f32::EPSILON as f64) * scale
    }

    fn from_f64_value(x: f64) -> Option<Self> {
        Some(x as f32)
    }

    fn approx_f64(&self) -> f64 {
        *self as f64
    }
}

impl Field for BigRational {
    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }

    fn is_negligible(&self, _scale: f64, _tol: f64) -> bool {
        self.is_zero()
    }

    fn from_f64_value(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }

    fn approx_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Exact rational from a small integer numerator/denominator pair.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
