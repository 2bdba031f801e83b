//! Floating-point element types for tensors and graphs.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Numeric precision of a computation graph.
///
/// Training runs in [`ScalarMode::Standard`] (32-bit); gradient verification
/// runs in [`ScalarMode::Verification`] (64-bit). The mode is carried by the
/// element type, so every tensor in a graph necessarily shares it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarMode {
    Standard,
    Verification,
}

pub trait Scalar: Float + Debug + Display + Default + Sum + Send + Sync + 'static {
    const MODE: ScalarMode;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const MODE: ScalarMode = ScalarMode::Standard;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const MODE: ScalarMode = ScalarMode::Verification;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
