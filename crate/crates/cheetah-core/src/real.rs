//! Scalar abstraction for the real-valued side of the pipeline.
//!
//! Everything that lives outside the plaintext ring (tensors, blinding
//! factors, decoded values) is generic over [`Real`], so the same math runs
//! at `f32` or `f64`. The protocol and CLI instantiate `f64`; see the
//! aliases at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable throughout the real-valued core.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Exact conversion from a small integer grid value.
    fn from_i64_exact(v: i64) -> Self {
        Self::from_i64(v).expect("grid value representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// 2^e as a `Real`, for signed small exponents.
pub fn exp2<R: Real>(e: i32) -> R {
    R::from_f64(2.0f64.powi(e)).expect("power of two representable")
}
