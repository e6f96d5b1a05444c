//! Scalar abstractions shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A real-valued feature coordinate.
///
/// `Display` must produce the shortest string that parses back to the same
/// value, which holds for the primitive floats; ensemble files rely on it.
pub trait Feature:
    Float + FromPrimitive + ToPrimitive + FromStr + Display + Debug + Default + Send + Sync + 'static
{
}

impl Feature for f32 {}
impl Feature for f64 {}

/// Floating-point type used for confidence bounds and posterior probabilities.
pub trait Probability: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from a count or an `f64` constant.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl Probability for f32 {}
impl Probability for f64 {}
