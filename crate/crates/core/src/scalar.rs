//! Scalar abstraction shared by every numerical module.
//!
//! All model code is written against [`Scalar`] so the same routines run in
//! `f64` (the default used by the CLI and the acceptance suite) or `f32`.

use num_traits::{Float, FromPrimitive, NumCast};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating-point type usable by the key-rate model.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + LowerExp + Sum + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every finite `f64` maps into `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Clamps into `[lo, hi]`; NaN maps to `lo`.
    #[inline]
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        if self.is_nan() || self < lo {
            lo
        } else if self > hi {
            hi
        } else {
            self
        }
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + NumCast
        + Debug
        + Display
        + LowerExp
        + Sum
        + Default
        + Send
        + Sync
        + 'static
{
}

/// `10^(-db/10)`: converts a positive dB loss to a linear transmittance.
pub fn db_to_linear<T: Scalar>(loss_db: T) -> T {
    T::lit(10.0).powf(-loss_db / T::lit(10.0))
}

/// Inverse of [`db_to_linear`].
pub fn linear_to_db<T: Scalar>(ratio: T) -> T {
    -T::lit(10.0) * ratio.log10()
}
