//! Scalar abstraction: all core math is generic over `f32`/`f64`.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the library computes with.
///
/// `nalgebra::RealField` supplies field operations and elementary functions;
/// the `num_traits` casts bridge to literals and to the `f64` wire formats.
pub trait Real:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + std::fmt::Display
{
    /// Lossy conversion from `f64`, used for constants and parsed input.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    /// Conversion to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }

    /// NaN/Inf check that works for any scalar width.
    fn is_finite_real(self) -> bool {
        self.to_f64().map(f64::is_finite).unwrap_or(false)
    }
}

impl<T> Real for T where
    T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + std::fmt::Display
{
}
