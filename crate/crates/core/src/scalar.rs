//! Floating-point abstraction shared by the vector and statistics code.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used for embedding components and statistics.
///
/// Implemented for `f32` and `f64`. Anything that parses from text, prints
/// round-trippably via `Display`, and converts losslessly enough to `f64` for
/// score accumulation qualifies.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Tolerance for iterative special-function evaluation at this precision.
    fn series_tolerance() -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable in every Scalar")
    }
}

impl Scalar for f32 {
    fn series_tolerance() -> Self {
        1e-7
    }
}

impl Scalar for f64 {
    fn series_tolerance() -> Self {
        1e-12
    }
}
