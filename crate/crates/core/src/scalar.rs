//! Floating-point abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the objectives, model and data generators are written against.
///
/// Implemented for `f32` and `f64`. Experiments run in `f64`; `f32` is
/// available for lightweight inference and is checked with looser tolerances.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Allowed deviation of a probability vector's sum from one.
    const SIMPLEX_TOL: f64;
    /// Smallest argument passed to `ln` in entropy and gradient evaluations.
    const LOG_CLAMP: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        // Every f64 literal we use is representable (possibly rounded) in f32.
        Self::from_f64(x).expect("f64 literal convertible to scalar")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize convertible to scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn log_clamp() -> Self {
        Self::lit(Self::LOG_CLAMP)
    }

    #[inline]
    fn simplex_tol() -> Self {
        Self::lit(Self::SIMPLEX_TOL)
    }
}

impl Scalar for f64 {
    const SIMPLEX_TOL: f64 = 1e-9;
    const LOG_CLAMP: f64 = 1e-12;
}

impl Scalar for f32 {
    const SIMPLEX_TOL: f64 = 1e-5;
    const LOG_CLAMP: f64 = 1e-12;
}
