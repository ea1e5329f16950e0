use num_traits::{Float, NumAssign, NumCast};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the numeric core is generic over.
pub trait Scalar: Float + NumAssign + Sum + Debug + Display + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 conversion")
    }

    fn from_usize(x: usize) -> Self {
        <Self as NumCast>::from(x).expect("usize conversion")
    }

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}
