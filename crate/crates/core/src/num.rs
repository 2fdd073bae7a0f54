//! Scalar abstraction for the numeric core.
//!
//! Every score, threshold, and metric in this crate is generic over [`Real`],
//! so the pipeline runs in either single or double precision. The on-disk
//! formats and the CLI always use `f64` (JSON numbers are IEEE doubles).

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the routing math is generic over.
///
/// Implemented for `f32` and `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Convert a finite `f64` constant or RNG draw into this scalar.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from(x).expect("finite f64 is representable in any Real")
    }

    /// Convert a count into this scalar.
    fn from_usize_lossy(n: usize) -> Self {
        Self::from(n).expect("usize is representable in any Real")
    }

    /// Widen to `f64`, e.g. for error messages and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip_for_both_widths() {
        assert_eq!(f32::from_f64_lossy(0.5), 0.5f32);
        assert_eq!(f64::from_f64_lossy(0.5), 0.5f64);
        assert_eq!(f32::from_usize_lossy(7), 7.0f32);
        assert_eq!(f64::from_usize_lossy(1000).as_f64(), 1000.0);
    }
}
