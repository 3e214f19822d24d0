//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All physics code is written against [`Real`], so the same source runs in
//! plain `f64` (forward simulation), `f32`, or [`Var`](crate::ad::Var) (taped
//! reverse-mode differentiation used by the adjoint pass).

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating point scalar usable by the simulator.
pub trait Real:
    Float
    + FromPrimitive
    + nalgebra::Scalar
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Primal value as `f64`. Branches and grid indexing use this.
    fn value(self) -> f64;

    /// Untracked constant.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
}

impl Real for f32 {
    #[inline]
    fn value(self) -> f64 {
        self as f64
    }

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
}

/// Casts an `f64` slice into any scalar type as untracked constants.
pub fn lift<T: Real>(values: &[f64]) -> Vec<T> {
    values.iter().map(|&v| T::lit(v)).collect()
}
