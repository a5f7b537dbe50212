//! Scalar abstraction for coordinate math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable for degree coordinates.
pub trait Coord:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a small integer constant; every value used here is exact in f32.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Coord for f32 {}
impl Coord for f64 {}
