//! Scalar abstraction shared by plain evaluation (`f64`) and reverse-mode
//! differentiation ([`Var`](crate::autodiff::Var)).
//!
//! Every numeric routine on the deformation path is written once against
//! [`Real`], so the value computed while fitting is the same value computed
//! at inference time.

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;

    /// Square root. The derivative at zero is taken as zero, which is the
    /// subgradient of a Euclidean norm at the origin.
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    /// Absolute value, derivative `sign(x)` (zero at zero).
    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else if self.value() > 0.0 {
            self
        } else {
            self * 0.0
        }
    }

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// Pick `self` or `other` by value; the derivative follows the pick.
    fn max(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }

    /// Clamp by value to `[lo, hi]`. Outside the interval the result is a
    /// constant.
    fn clamp(self, lo: f64, hi: f64) -> Self {
        let v = self.value();
        if v < lo {
            Self::from_f64(lo)
        } else if v > hi {
            Self::from_f64(hi)
        } else {
            self
        }
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn sin(self) -> Self {
        libm::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        libm::cos(self)
    }
    #[inline]
    fn abs(self) -> Self {
        libm::fabs(self)
    }
}

/// `f64` helpers that route through `libm` so results do not depend on the
/// platform's libm when the crate is built without `std`.
pub(crate) mod fm {
    #[inline]
    pub fn sqrt(v: f64) -> f64 {
        libm::sqrt(v)
    }
    #[inline]
    pub fn acos(v: f64) -> f64 {
        libm::acos(v)
    }
    #[inline]
    pub fn atan2(y: f64, x: f64) -> f64 {
        libm::atan2(y, x)
    }
    #[inline]
    pub fn sin(v: f64) -> f64 {
        libm::sin(v)
    }
    #[inline]
    pub fn cos(v: f64) -> f64 {
        libm::cos(v)
    }
    #[inline]
    pub fn abs(v: f64) -> f64 {
        libm::fabs(v)
    }
    #[inline]
    pub fn floor(v: f64) -> f64 {
        libm::floor(v)
    }
    #[inline]
    pub fn ceil(v: f64) -> f64 {
        libm::ceil(v)
    }
    #[inline]
    pub fn round(v: f64) -> f64 {
        libm::round(v)
    }
}
