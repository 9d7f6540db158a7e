//! Floating point scalar abstraction shared by every numeric kernel.
//!
//! Missing observations are stored in-band as NaN. Use [`Scalar::is_missing`]
//! and [`Scalar::missing`] instead of comparing against NaN directly.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the pipeline can run on: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Total for both supported types.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    #[inline]
    fn missing() -> Self {
        Self::nan()
    }

    #[inline]
    fn is_missing(self) -> bool {
        self.is_nan()
    }

    /// `Some(self)` when observed.
    #[inline]
    fn observed(self) -> Option<Self> {
        if self.is_nan() {
            None
        } else {
            Some(self)
        }
    }

    /// Parses a decimal literal; `None` on malformed input.
    fn parse_decimal(s: &str) -> Option<Self> {
        s.trim().parse::<Self>().ok()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Log-odds of a probability, clamped away from 0 and 1.
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    let p = clamp_probability(p);
    (p / (T::one() - p)).ln()
}

/// Clamps into `[1e-15, 1 - 1e-15]` (`f32` uses its own epsilon-scaled bound).
#[inline]
pub fn clamp_probability<T: Scalar>(p: T) -> T {
    let lo = T::of(1e-15).max(T::epsilon());
    let hi = T::one() - lo;
    p.max(lo).min(hi)
}
