//! Scalar abstraction shared by the camera models and pose algebra.
//!
//! Everything geometric is written against [`Real`], so the same code runs in
//! `f64` (the default, used by the pipeline), `f32`, or a forward-mode
//! [`Dual`](crate::dual::Dual) when derivatives are wanted.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: f32, f64 or anything that behaves like one.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {}
