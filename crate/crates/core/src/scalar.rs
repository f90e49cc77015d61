//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Real scalar used for energies, costs and efficiencies: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Slack allowed on SOC bounds and load non-negativity (kWh).
    fn feasibility_tol() -> Self;

    /// Converts an `f64` literal. Every literal used in the crate fits in `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn feasibility_tol() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn feasibility_tol() -> Self {
        1e-9
    }
}

/// Maximum of a slice; `None` when empty.
pub(crate) fn max_of<S: Scalar>(xs: &[S]) -> Option<S> {
    xs.iter().copied().reduce(S::max)
}
