//! Floating-point scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar: `f32` or `f64`.
///
/// All on-disk formats store `f64`; values are converted on read and write.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Short type name used in report provenance.
    const NAME: &'static str;

    /// Off-diagonal threshold for one-sided Jacobi sweeps.
    fn jacobi_tol() -> Self;

    /// Converts an `f64` literal. Infallible for the float types implementing this trait.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to float")
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    fn jacobi_tol() -> Self {
        1e-12
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    fn jacobi_tol() -> Self {
        // 1e-12 is below f32 resolution; a few ulps is the tightest meaningful target.
        8.0 * f32::EPSILON
    }
}
