//! Scalar abstraction shared by the jet and series algebra.
//!
//! Two models are provided: arbitrary-precision floats for the numerical
//! pipeline and exact rationals for algebraic round-trip checks.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::bigfloat::BigFloat;

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn is_zero(&self) -> bool;
    /// Approximate log2 of the magnitude, used only for pivot selection.
    fn mag_log2(&self) -> f64;
}

impl Scalar for BigFloat {
    fn zero() -> Self {
        BigFloat::zero()
    }

    fn one() -> Self {
        BigFloat::one()
    }

    fn from_i64(v: i64) -> Self {
        BigFloat::from_i64(v)
    }

    fn is_zero(&self) -> bool {
        BigFloat::is_zero(self)
    }

    fn mag_log2(&self) -> f64 {
        BigFloat::mag_log2(self)
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }

    fn one() -> Self {
        <BigRational as One>::one()
    }

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn is_zero(&self) -> bool {
        <BigRational as Zero>::is_zero(self)
    }

    fn mag_log2(&self) -> f64 {
        if <BigRational as Zero>::is_zero(self) {
            f64::NEG_INFINITY
        } else {
            let n = self.numer().abs().bits() as f64;
            let d = self.denom().abs().bits() as f64;
            n - d
        }
    }
}

/// Convenience: q = a/b as an exact rational.
pub fn rational(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}
