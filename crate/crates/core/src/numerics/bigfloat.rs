//! Extended-precision scalar arithmetic on top of MPFR.
//!
//! Precision is tracked in decimal digits per value. Binary operations
//! round to the smaller operand precision; values produced from plain
//! integers are flagged exact and defer to the other operand (or to the
//! thread-local default precision when no finite-precision operand is
//! involved).

use std::cell::Cell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rug::float::Round;
use rug::ops::CompleteRound;
use rug::Float;

/// Sentinel for values that are exact (small integers and their sums/products).
const EXACT: u32 = u32::MAX;

pub const DEFAULT_DIGITS: u32 = 80;

thread_local! {
    static CTX_DIGITS: Cell<u32> = const { Cell::new(DEFAULT_DIGITS) };
}

/// Bits needed to represent `digits` decimal digits, with a small guard.
fn bits_for(digits: u32) -> u32 {
    ((digits as f64) * std::f64::consts::LOG2_10).ceil() as u32 + 4
}

/// Current thread-local working precision in decimal digits.
pub fn ctx_digits() -> u32 {
    CTX_DIGITS.with(|c| c.get())
}

/// Sets the thread-local working precision, restoring the previous one on drop.
pub struct PrecisionGuard {
    prev: u32,
}

impl PrecisionGuard {
    pub fn new(digits: u32) -> Self {
        let prev = CTX_DIGITS.with(|c| c.replace(digits));
        PrecisionGuard { prev }
    }
}

impl Drop for PrecisionGuard {
    fn drop(&mut self) {
        CTX_DIGITS.with(|c| c.set(self.prev));
    }
}

/// Runs `f` with the thread-local working precision set to `digits`.
pub fn with_digits<R>(digits: u32, f: impl FnOnce() -> R) -> R {
    let _g = PrecisionGuard::new(digits);
    f()
}

/// Arbitrary-precision real number with per-value precision tracking.
#[derive(Clone, Debug)]
pub struct BigFloat {
    f: Float,
    digits: u32,
}

impl BigFloat {
    pub fn zero() -> Self {
        BigFloat { f: Float::with_val(64, 0), digits: EXACT }
    }

    pub fn one() -> Self {
        BigFloat { f: Float::with_val(64, 1), digits: EXACT }
    }

    pub fn from_i64(v: i64) -> Self {
        BigFloat { f: Float::with_val(64, v), digits: EXACT }
    }

    /// Parses a decimal string at the given precision.
    pub fn parse_digits(s: &str, digits: u32) -> Result<Self, rug::float::ParseFloatError> {
        let inc = Float::parse(s)?;
        Ok(BigFloat { f: inc.complete(bits_for(digits)), digits })
    }

    /// Parses a decimal string at the thread-local working precision.
    pub fn parse(s: &str) -> Result<Self, rug::float::ParseFloatError> {
        Self::parse_digits(s, ctx_digits())
    }

    pub fn from_f64_digits(v: f64, digits: u32) -> Self {
        BigFloat { f: Float::with_val(bits_for(digits), v), digits }
    }

    /// π at the thread-local working precision.
    pub fn pi() -> Self {
        let d = ctx_digits();
        BigFloat { f: Float::with_val(bits_for(d), rug::float::Constant::Pi), digits: d }
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn is_exact(&self) -> bool {
        self.digits == EXACT
    }

    /// Re-rounds the value to `digits` decimal digits.
    pub fn with_precision(&self, digits: u32) -> Self {
        let mut f = self.f.clone();
        f.set_prec_round(bits_for(digits), Round::Nearest);
        BigFloat { f, digits }
    }

    fn res_digits(&self, other: &Self) -> Option<u32> {
        match (self.digits, other.digits) {
            (EXACT, EXACT) => None,
            (EXACT, d) | (d, EXACT) => Some(d),
            (a, b) => Some(a.min(b)),
        }
    }

    /// Target decimal digits for a unary inexact operation.
    fn own_digits(&self) -> u32 {
        if self.digits == EXACT { ctx_digits() } else { self.digits }
    }

    fn unary(&self, digits: u32, op: impl FnOnce(&Float, u32) -> Float) -> Self {
        BigFloat { f: op(&self.f, bits_for(digits)), digits }
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.f.is_finite()
    }

    pub fn is_sign_negative(&self) -> bool {
        self.f.is_sign_negative() && !self.f.is_zero()
    }

    pub fn abs(&self) -> Self {
        BigFloat { f: self.f.clone().abs(), digits: self.digits }
    }

    pub fn sqrt(&self) -> Self {
        let d = self.own_digits();
        self.unary(d, |f, b| Float::with_val(b, f.sqrt_ref()))
    }

    pub fn exp(&self) -> Self {
        let d = self.own_digits();
        self.unary(d, |f, b| Float::with_val(b, f.exp_ref()))
    }

    pub fn ln(&self) -> Self {
        let d = self.own_digits();
        self.unary(d, |f, b| Float::with_val(b, f.ln_ref()))
    }

    pub fn sin(&self) -> Self {
        let d = self.own_digits();
        self.unary(d, |f, b| Float::with_val(b, f.sin_ref()))
    }

    pub fn cos(&self) -> Self {
        let d = self.own_digits();
        self.unary(d, |f, b| Float::with_val(b, f.cos_ref()))
    }

    pub fn atan2(&self, x: &Self) -> Self {
        let d = self.res_digits(x).unwrap_or_else(ctx_digits);
        BigFloat { f: Float::with_val(bits_for(d), self.f.atan2_ref(&x.f)), digits: d }
    }

    pub fn asin(&self) -> Self {
        let d = self.own_digits();
        self.unary(d, |f, b| Float::with_val(b, f.asin_ref()))
    }

    pub fn powi(&self, e: i32) -> Self {
        if e == 0 {
            return BigFloat::one();
        }
        // Negative powers of exact values are quotients, hence inexact.
        let d = if self.digits == EXACT && e < 0 { ctx_digits() } else { self.digits };
        let bits = if d == EXACT { self.f.prec() * e.unsigned_abs().max(1) + 8 } else { bits_for(d) };
        let p = Float::with_val(bits, rug::ops::Pow::pow(&self.f, e));
        BigFloat { f: p, digits: d }
    }

    pub fn recip(&self) -> Self {
        let d = self.own_digits();
        self.unary(d, |f, b| Float::with_val(b, f.recip_ref()))
    }

    pub fn floor_i64(&self) -> i64 {
        self.f
            .to_integer_round(Round::Down)
            .map(|(i, _)| i.to_i64().unwrap_or(0))
            .unwrap_or(0)
    }

    pub fn to_f64(&self) -> f64 {
        self.f.to_f64()
    }

    /// Approximate log2 of |x|; very negative for zero. Used for pivoting.
    pub fn mag_log2(&self) -> f64 {
        if self.f.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.f.get_exp().map(|e| e as f64).unwrap_or(f64::NEG_INFINITY)
        }
    }

    /// Decimal string carrying the full stored precision. Two extra digits
    /// guarantee that parsing the string back at the same precision restores
    /// the value bit for bit.
    pub fn to_decimal_string(&self) -> String {
        let digits = if self.digits == EXACT {
            ((self.f.prec() as f64) / std::f64::consts::LOG2_10).floor() as usize
        } else {
            self.digits as usize + 4
        };
        self.f.to_string_radix(10, Some(digits.max(17)))
    }

    fn bin(&self, other: &Self, op: impl FnOnce(&Float, &Float, u32) -> Float) -> Self {
        match self.res_digits(other) {
            Some(d) => BigFloat { f: op(&self.f, &other.f, bits_for(d)), digits: d },
            None => {
                // Both operands exact: keep enough bits to stay exact.
                let bits = self.f.prec() + other.f.prec() + 8;
                BigFloat { f: op(&self.f, &other.f, bits), digits: EXACT }
            }
        }
    }
}

impl PartialEq for BigFloat {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f
    }
}

impl PartialOrd for BigFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.f.partial_cmp(&other.f)
    }
}

impl fmt::Display for BigFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal_string())
    }
}

macro_rules! impl_bin_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for &BigFloat {
            type Output = BigFloat;
            fn $m(self, rhs: &BigFloat) -> BigFloat {
                self.bin(rhs, |a, b, bits| Float::with_val(bits, a $op b))
            }
        }
        impl $tr for BigFloat {
            type Output = BigFloat;
            fn $m(self, rhs: BigFloat) -> BigFloat {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&BigFloat> for BigFloat {
            type Output = BigFloat;
            fn $m(self, rhs: &BigFloat) -> BigFloat {
                (&self).$m(rhs)
            }
        }
        impl $tr<BigFloat> for &BigFloat {
            type Output = BigFloat;
            fn $m(self, rhs: BigFloat) -> BigFloat {
                self.$m(&rhs)
            }
        }
    };
}

impl_bin_op!(Add, add, +);
impl_bin_op!(Sub, sub, -);
impl_bin_op!(Mul, mul, *);

impl Div for &BigFloat {
    type Output = BigFloat;
    fn div(self, rhs: &BigFloat) -> BigFloat {
        // Exact/exact quotients are generally inexact: round at context precision.
        let d = self.res_digits(rhs).unwrap_or_else(ctx_digits);
        BigFloat { f: Float::with_val(bits_for(d), &self.f / &rhs.f), digits: d }
    }
}

impl Div for BigFloat {
    type Output = BigFloat;
    fn div(self, rhs: BigFloat) -> BigFloat {
        (&self).div(&rhs)
    }
}

impl Div<&BigFloat> for BigFloat {
    type Output = BigFloat;
    fn div(self, rhs: &BigFloat) -> BigFloat {
        (&self).div(rhs)
    }
}

impl Div<BigFloat> for &BigFloat {
    type Output = BigFloat;
    fn div(self, rhs: BigFloat) -> BigFloat {
        self.div(&rhs)
    }
}

impl Neg for &BigFloat {
    type Output = BigFloat;
    fn neg(self) -> BigFloat {
        BigFloat { f: (-&self.f).complete(self.f.prec()), digits: self.digits }
    }
}

impl Neg for BigFloat {
    type Output = BigFloat;
    fn neg(self) -> BigFloat {
        (&self).neg()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_precision_propagates() {
        let a = BigFloat::parse_digits("1.5", 100).unwrap();
        let b = BigFloat::parse_digits("2.25", 40).unwrap();
        assert_eq!((&a + &b).digits(), 40);
        assert_eq!((&a * &b).digits(), 40);
    }

    #[test]
    fn exact_constants_defer() {
        let a = BigFloat::parse_digits("1.5", 100).unwrap();
        let two = BigFloat::from_i64(2);
        assert_eq!((&a * &two).digits(), 100);
        assert!((&two * BigFloat::from_i64(3)).is_exact());
    }

    #[test]
    fn sqrt_two_matches_reference() {
        let x = with_digits(60, || BigFloat::from_i64(2).sqrt());
        let r = BigFloat::parse_digits("1.4142135623730950488016887242096980785696718753769", 60)
            .unwrap();
        let err = (&x - &r).abs();
        assert!(err < BigFloat::parse_digits("1e-48", 20).unwrap());
    }

    #[test]
    fn precision_stability() {
        // Recomputing at higher precision agrees to the lower precision.
        let f = |d: u32| {
            with_digits(d, || {
                let x = BigFloat::parse("0.7").unwrap();
                (x.sin().exp() + BigFloat::pi().ln()).sqrt()
            })
        };
        let a = f(60);
        let b = f(80);
        let err = (&a - &b).abs();
        assert!(err < BigFloat::parse_digits("1e-55", 20).unwrap());
    }
}
