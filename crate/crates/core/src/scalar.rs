//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating point scalar: `f32` or `f64`.
///
/// Built on nalgebra's `RealField` (itself layered on num-traits) so the same
/// code drives both the scalar formulas and the dense factorizations.
pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn to_radians(self) -> Self {
        self * Self::pi() / Self::lit(180.0)
    }

    #[inline]
    fn to_degrees(self) -> Self {
        self * Self::lit(180.0) / Self::pi()
    }

    /// `10^(self/10)`: dB to linear power ratio.
    #[inline]
    fn db_to_linear(self) -> Self {
        Self::lit(10.0).powf(self / Self::lit(10.0))
    }

    /// `10·log10(self)`: linear power ratio to dB.
    #[inline]
    fn linear_to_db(self) -> Self {
        Self::lit(10.0) * self.log10()
    }
}

impl<T: RealField + Copy + ToPrimitive> Real for T {}
