//! Coefficient arithmetic shared by every series computation.
//!
//! Three carriers are supported: exact big integers, exact rationals and
//! fixed-precision binary floats. A computation picks one carrier up front
//! and keeps it; nothing converts between carriers behind the caller's back.

use std::fmt;

use rug::ops::Pow;
use rug::{Assign, Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard bits added on top of any requested working precision.
pub const GUARD_BITS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArithmeticMode {
    ExactInteger,
    ExactRational,
    BigFloat(u32),
}

impl ArithmeticMode {
    pub fn is_exact(self) -> bool {
        !matches!(self, ArithmeticMode::BigFloat(_))
    }
}

impl fmt::Display for ArithmeticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArithmeticMode::ExactInteger => write!(f, "exact-integer"),
            ArithmeticMode::ExactRational => write!(f, "exact-rational"),
            ArithmeticMode::BigFloat(bits) => write!(f, "big-float({bits})"),
        }
    }
}

/// A real number that is either known exactly or only to some precision.
#[derive(Clone, Debug, PartialEq)]
pub enum Real {
    Exact(Rational),
    Approx(Float),
}

impl Real {
    pub fn zero() -> Self {
        Real::Exact(Rational::new())
    }

    pub fn from_int(v: i64) -> Self {
        Real::Exact(Rational::from(v))
    }

    pub fn to_float(&self, bits: u32) -> Float {
        match self {
            Real::Exact(r) => Float::with_val(bits, r),
            Real::Approx(f) => Float::with_val(bits, f),
        }
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Real::Exact(r) => Some(r),
            Real::Approx(_) => None,
        }
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Real::Exact(r) if r.is_integer())
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Real::Exact(r) => r.to_f64(),
            Real::Approx(f) => f.to_f64(),
        }
    }

    /// `self - c * k`, exact when both operands are exact.
    pub fn sub_scaled(&self, c: &Real, k: u64) -> Real {
        match (self, c) {
            (Real::Exact(a), Real::Exact(c)) => Real::Exact(a - Rational::from(c * k)),
            _ => {
                let bits = self.bits().max(c.bits());
                let mut v = self.to_float(bits);
                v -= c.to_float(bits) * k;
                Real::Approx(v)
            }
        }
    }

    fn bits(&self) -> u32 {
        match self {
            Real::Exact(_) => 64,
            Real::Approx(f) => f.prec(),
        }
    }

    pub fn pow_u32(&self, e: u32, bits: u32) -> Real {
        match self {
            Real::Exact(r) => Real::Exact(Rational::from(r.pow(e))),
            Real::Approx(f) => Real::Approx(Float::with_val(bits, f.pow(e))),
        }
    }

    pub fn render(&self, digits: usize) -> String {
        match self {
            Real::Exact(r) => exact_string(r),
            Real::Approx(f) => decimal_string(f, digits),
        }
    }
}

impl From<Rational> for Real {
    fn from(r: Rational) -> Self {
        Real::Exact(r)
    }
}

impl From<Float> for Real {
    fn from(f: Float) -> Self {
        Real::Approx(f)
    }
}

/// Ring operations needed by truncated power series.
pub trait Scalar: Clone + Send + Sync + fmt::Debug + 'static {
    /// Construction context: precision for floats, nothing for exact carriers.
    type Ctx: Copy + Send + Sync + fmt::Debug + PartialEq;

    fn mode(ctx: Self::Ctx) -> ArithmeticMode;
    fn ctx(&self) -> Self::Ctx;
    fn zero(ctx: Self::Ctx) -> Self;
    fn from_integer(ctx: Self::Ctx, v: &Integer) -> Self;
    /// `None` when the carrier cannot hold the value exactly.
    fn from_real(ctx: Self::Ctx, v: &Real) -> Option<Self>;

    fn add_ref(&mut self, other: &Self);
    fn sub_ref(&mut self, other: &Self);
    fn mul_ref(&self, other: &Self) -> Self;
    /// `self += a * b`
    fn add_mul(&mut self, a: &Self, b: &Self);
    fn mul_u64(&mut self, k: u64);
    fn is_zero(&self) -> bool;

    fn to_float(&self, bits: u32) -> Float;
    fn to_rational(&self) -> Option<Rational>;
    fn render(&self, digits: usize) -> String;

    fn one(ctx: Self::Ctx) -> Self {
        Self::from_integer(ctx, &Integer::from(1))
    }
}

impl Scalar for Integer {
    type Ctx = ();

    fn mode(_: ()) -> ArithmeticMode {
        ArithmeticMode::ExactInteger
    }
    fn ctx(&self) {}
    fn zero(_: ()) -> Self {
        Integer::new()
    }
    fn from_integer(_: (), v: &Integer) -> Self {
        v.clone()
    }
    fn from_real(_: (), v: &Real) -> Option<Self> {
        match v {
            Real::Exact(r) if r.is_integer() => Some(r.numer().clone()),
            _ => None,
        }
    }
    fn add_ref(&mut self, other: &Self) {
        *self += other;
    }
    fn sub_ref(&mut self, other: &Self) {
        *self -= other;
    }
    fn mul_ref(&self, other: &Self) -> Self {
        Integer::from(self * other)
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn mul_u64(&mut self, k: u64) {
        *self *= k;
    }
    fn is_zero(&self) -> bool {
        self.cmp0() == std::cmp::Ordering::Equal
    }
    fn to_float(&self, bits: u32) -> Float {
        Float::with_val(bits, self)
    }
    fn to_rational(&self) -> Option<Rational> {
        Some(Rational::from(self))
    }
    fn render(&self, _: usize) -> String {
        self.to_string()
    }
}

impl Scalar for Rational {
    type Ctx = ();

    fn mode(_: ()) -> ArithmeticMode {
        ArithmeticMode::ExactRational
    }
    fn ctx(&self) {}
    fn zero(_: ()) -> Self {
        Rational::new()
    }
    fn from_integer(_: (), v: &Integer) -> Self {
        Rational::from(v)
    }
    fn from_real(_: (), v: &Real) -> Option<Self> {
        v.as_exact().cloned()
    }
    fn add_ref(&mut self, other: &Self) {
        *self += other;
    }
    fn sub_ref(&mut self, other: &Self) {
        *self -= other;
    }
    fn mul_ref(&self, other: &Self) -> Self {
        Rational::from(self * other)
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += Rational::from(a * b);
    }
    fn mul_u64(&mut self, k: u64) {
        *self *= k;
    }
    fn is_zero(&self) -> bool {
        self.cmp0() == std::cmp::Ordering::Equal
    }
    fn to_float(&self, bits: u32) -> Float {
        Float::with_val(bits, self)
    }
    fn to_rational(&self) -> Option<Rational> {
        Some(self.clone())
    }
    fn render(&self, _: usize) -> String {
        exact_string(self)
    }
}

impl Scalar for Float {
    type Ctx = u32;

    fn mode(bits: u32) -> ArithmeticMode {
        ArithmeticMode::BigFloat(bits)
    }
    fn ctx(&self) -> u32 {
        self.prec()
    }
    fn zero(bits: u32) -> Self {
        Float::new(bits)
    }
    fn from_integer(bits: u32, v: &Integer) -> Self {
        Float::with_val(bits, v)
    }
    fn from_real(bits: u32, v: &Real) -> Option<Self> {
        Some(v.to_float(bits))
    }
    fn add_ref(&mut self, other: &Self) {
        *self += other;
    }
    fn sub_ref(&mut self, other: &Self) {
        *self -= other;
    }
    fn mul_ref(&self, other: &Self) -> Self {
        Float::with_val(self.prec(), self * other)
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        let mut t = Float::new(self.prec());
        t.assign(a * b);
        *self += &t;
    }
    fn mul_u64(&mut self, k: u64) {
        *self *= k;
    }
    fn is_zero(&self) -> bool {
        Float::is_zero(self)
    }
    fn to_float(&self, bits: u32) -> Float {
        Float::with_val(bits, self)
    }
    fn to_rational(&self) -> Option<Rational> {
        None
    }
    fn render(&self, digits: usize) -> String {
        decimal_string(self, digits)
    }
}

/// Converts a mode request into the concrete carrier for a set of values.
/// Exact requests settle on integers when every input is integral.
pub fn resolve_exact_mode<'a>(values: impl IntoIterator<Item = &'a Real>) -> Result<ArithmeticMode> {
    let mut integral = true;
    for v in values {
        match v {
            Real::Exact(r) => integral &= r.is_integer(),
            Real::Approx(_) => {
                return Err(Error::Unrepresentable {
                    mode: "exact".into(),
                    what: "a toll or initial value known only approximately".into(),
                })
            }
        }
    }
    Ok(if integral {
        ArithmeticMode::ExactInteger
    } else {
        ArithmeticMode::ExactRational
    })
}

/// Exact rational as `p` or `p/q`.
pub fn exact_string(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Plain decimal rendering with `digits` significant digits and trailing
/// zeros removed; falls back to scientific notation for extreme exponents.
/// Output never depends on locale.
pub fn decimal_string(f: &Float, digits: usize) -> String {
    if f.is_nan() {
        return "NaN".into();
    }
    if f.is_infinite() {
        return if f.is_sign_negative() { "-inf" } else { "inf" }.into();
    }
    if f.is_zero() {
        return "0".into();
    }
    let (neg, mantissa, exp) = f.to_sign_string_exp(10, Some(digits.max(1)));
    let exp = exp.unwrap_or(0);
    let mantissa = mantissa.trim_end_matches('0');
    let mantissa = if mantissa.is_empty() { "0" } else { mantissa };
    let sign = if neg { "-" } else { "" };
    // value = 0.mantissa * 10^exp
    let body = if (-24..=48).contains(&exp) {
        if exp <= 0 {
            format!("0.{}{}", "0".repeat((-exp) as usize), mantissa)
        } else {
            let e = exp as usize;
            if mantissa.len() <= e {
                format!("{}{}", mantissa, "0".repeat(e - mantissa.len()))
            } else {
                format!("{}.{}", &mantissa[..e], &mantissa[e..])
            }
        }
    } else {
        let (head, tail) = mantissa.split_at(1);
        if tail.is_empty() {
            format!("{}e{}", head, exp - 1)
        } else {
            format!("{}.{}e{}", head, tail, exp - 1)
        }
    };
    format!("{sign}{body}")
}

/// Decimal digits carried by `bits` binary digits.
pub fn digits_for_bits(bits: u32) -> usize {
    ((bits as f64) * std::f64::consts::LOG10_2).floor().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal_string(&Float::with_val(64, 0.25), 20), "0.25");
        assert_eq!(decimal_string(&Float::with_val(64, -2), 20), "-2");
        assert_eq!(decimal_string(&Float::with_val(64, 1234.5), 20), "1234.5");
        assert_eq!(decimal_string(&Float::with_val(64, 0.001), 3), "0.001");
        assert_eq!(decimal_string(&Float::with_val(64, 1e60), 3), "1e60");
        assert_eq!(decimal_string(&Float::new(64), 3), "0");
    }

    #[test]
    fn exact_mode_resolution() {
        let ints = [Real::from_int(3), Real::from_int(-1)];
        assert_eq!(resolve_exact_mode(&ints).unwrap(), ArithmeticMode::ExactInteger);
        let rat = [Real::Exact(Rational::from((1, 3)))];
        assert_eq!(resolve_exact_mode(&rat).unwrap(), ArithmeticMode::ExactRational);
        let approx = [Real::Approx(Float::with_val(64, 0.5))];
        assert!(resolve_exact_mode(&approx).is_err());
    }

    #[test]
    fn integers_reject_fractions() {
        assert!(Integer::from_real((), &Real::Exact(Rational::from((1, 2)))).is_none());
        assert_eq!(Integer::from_real((), &Real::from_int(7)), Some(Integer::from(7)));
    }
}
