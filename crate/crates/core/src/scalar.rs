//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the analysis is generic over (`f32` or `f64`).
///
/// Tolerances quoted throughout the crate (1e-8 reconstruction, 1e-12
/// brute-force equivalence) are met by `f64`. `f32` runs the same code paths
/// with tolerances scaled to its epsilon.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + ScalarOperand + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
