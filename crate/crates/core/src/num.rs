//! Scalar abstraction shared by every numeric module.
//!
//! Training paths run in `f32`; gradient certification and the analytic
//! oracles run in `f64`. Everything in between is written once against
//! [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the two supported types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self.to_f32().expect("finite cast")
    }

    /// Absolute tolerance used by structural invariant checks
    /// (orthonormality, unit length). `1e-9` for `f64`, looser for `f32`.
    #[inline]
    fn structural_tol() -> Self {
        let eps = Self::epsilon() * Self::lit(100.0);
        eps.max(Self::lit(1e-9))
    }

    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// `ln(1 + e^x)` without overflow.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::lit(20.0) {
            self
        } else {
            self.exp().ln_1p()
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_are_finite_at_extremes() {
        for &x in &[-1e6f64, -50.0, 0.0, 50.0, 1e6] {
            assert!(x.sigmoid().is_finite());
            assert!(x.softplus().is_finite());
        }
        assert_eq!(0.0f64.sigmoid(), 0.5);
        assert!((0.0f64.softplus() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn tolerance_per_precision() {
        assert_eq!(f64::structural_tol(), 1e-9);
        assert!(f32::structural_tol() > 1e-6);
    }
}
