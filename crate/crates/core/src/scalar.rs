//! Scalar abstractions shared by every module.
//!
//! The polynomial maps of the family (surface equation, Vieta involutions,
//! trace map) only need ring operations, so they are generic over [`Ring`]
//! and run unchanged on `f64`, [`Complex64`] and exact [`BigRational`]s.
//! Anything that needs a modulus, a square root or a conjugate is bounded by
//! [`Scalar`] instead, which only the two floating types implement.

use std::fmt::Debug;
use std::ops::Neg;

use num::bigint::BigInt;
use num::complex::Complex64;
use num::{BigRational, Num, One, Signed, ToPrimitive, Zero};
use serde_json::Value;

/// Exact or floating arithmetic sufficient for the polynomial maps.
pub trait Ring: Clone + PartialEq + Debug + Num + Neg<Output = Self> {
    fn from_i64(v: i64) -> Self;
}

impl Ring for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

impl Ring for Complex64 {
    fn from_i64(v: i64) -> Self {
        Complex64::new(v as f64, 0.0)
    }
}

impl Ring for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
}

/// Double-precision scalars, real or complex.
pub trait Scalar: Ring + Copy + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    /// Absolute value or complex modulus.
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn is_finite(self) -> bool;
    /// Principal square root (NaN for negative reals).
    fn sqrt(self) -> Self;
    fn to_complex(self) -> Complex64 {
        Complex64::new(self.re(), self.im())
    }
    fn scale(self, s: f64) -> Self {
        self * Self::from_f64(s)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

impl Scalar for Complex64 {
    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
}

/// Hermitian inner product `Σ conj(a_i) b_i`.
pub fn hdot<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2]
}

/// Bilinear pairing `Σ a_i b_i` (no conjugation), used for `∇F · v`.
pub fn bdot<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3<T: Scalar>(v: &[T; 3]) -> f64 {
    hdot(v, v).re().max(0.0).sqrt()
}

/// JSON representation of a scalar: plain numbers for reals, `[re, im]` for
/// complex values, `"p/q"` strings for exact rationals.
pub trait JsonScalar: Sized {
    fn to_json(&self) -> Value;
    fn from_json(v: &Value) -> Result<Self, String>;
}

fn json_f64(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

fn parse_pair(v: &Value) -> Result<(f64, f64), String> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .map(|x| (x, 0.0))
            .ok_or_else(|| format!("not a finite number: {n}")),
        Value::Array(items) if items.len() == 2 => {
            let re = items[0].as_f64().ok_or("complex real part is not a number")?;
            let im = items[1].as_f64().ok_or("complex imaginary part is not a number")?;
            Ok((re, im))
        }
        other => Err(format!("expected a number or [re, im], got {other}")),
    }
}

impl JsonScalar for f64 {
    fn to_json(&self) -> Value {
        json_f64(*self)
    }
    fn from_json(v: &Value) -> Result<Self, String> {
        let (re, im) = parse_pair(v)?;
        if im != 0.0 {
            return Err(format!("expected a real scalar, got imaginary part {im}"));
        }
        Ok(re)
    }
}

impl JsonScalar for Complex64 {
    fn to_json(&self) -> Value {
        Value::Array(vec![json_f64(self.re), json_f64(self.im)])
    }
    fn from_json(v: &Value) -> Result<Self, String> {
        parse_pair(v).map(|(re, im)| Complex64::new(re, im))
    }
}

impl JsonScalar for BigRational {
    fn to_json(&self) -> Value {
        Value::String(rational_to_string(self))
    }
    fn from_json(v: &Value) -> Result<Self, String> {
        match v {
            Value::String(s) => parse_rational(s),
            Value::Number(n) => n
                .as_i64()
                .map(|i| BigRational::from_integer(BigInt::from(i)))
                .ok_or_else(|| format!("exact scalar must be an integer or \"p/q\", got {n}")),
            other => Err(format!("expected \"p/q\", got {other}")),
        }
    }
}

pub fn rational_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().map_err(|_| format!("bad numerator in {s:?}"))?;
    let d: BigInt = den.parse().map_err(|_| format!("bad denominator in {s:?}"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(BigRational::new(n, d))
}

/// Exact conversion of a finite double to a rational.
pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}
