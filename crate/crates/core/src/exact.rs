//! Exact arithmetic used by the enumeration-based checks.
//!
//! Probabilities read from model files are kept as [`BigRational`] when the
//! file gives them as fractions or decimal strings. Critical tilt parameters
//! are usually irrational; when they are quadratic surds the tilted weights
//! live in a real quadratic field, represented here by [`Quad`].

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Field operations needed to weigh trees and normalize conditioned laws.
pub trait Scalar:
    Clone
    + PartialEq
    + fmt::Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn from_rational(q: &BigRational) -> Self;
    /// Nearest `f64`.
    fn approx(&self) -> f64;

    fn powu(&self, n: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base.clone();
            }
            base = base.clone() * base;
            n >>= 1;
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_rational(q: &BigRational) -> Self {
        q.to_f64().unwrap_or(f64::NAN)
    }
    fn approx(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }
    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `"p/q"`, an integer, or a decimal string such as `"0.125"` or
/// `"2.5e-3"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::InvalidModel(format!("cannot parse probability {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| bad())?
    };
    if negative {
        num = -num;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Element `rat + irr * sqrt(d)` of the real quadratic field Q(sqrt d), with
/// `d > 1` squarefree. Rationals embed with `irr = 0`.
#[derive(Clone, Debug)]
pub struct Quad {
    pub rat: BigRational,
    pub irr: BigRational,
    pub d: BigInt,
}

impl Quad {
    pub fn rational(q: BigRational) -> Self {
        Quad {
            rat: q,
            irr: BigRational::zero(),
            d: BigInt::one(),
        }
    }

    pub fn new(rat: BigRational, irr: BigRational, d: BigInt) -> Self {
        let mut q = Quad { rat, irr, d };
        q.normalize();
        q
    }

    /// `sqrt(d)` for a squarefree `d > 1`.
    pub fn sqrt_of(d: i64) -> Self {
        Quad::new(BigRational::zero(), BigRational::one(), BigInt::from(d))
    }

    fn normalize(&mut self) {
        if self.irr.is_zero() || self.d.is_one() {
            if self.d.is_one() {
                self.rat = &self.rat + &self.irr;
            }
            self.irr = BigRational::zero();
            self.d = BigInt::one();
        }
    }

    fn field(&self, other: &Quad) -> BigInt {
        match (self.irr.is_zero(), other.irr.is_zero()) {
            (true, _) => other.d.clone(),
            (_, true) => self.d.clone(),
            _ => {
                assert_eq!(self.d, other.d, "mixing quadratic fields");
                self.d.clone()
            }
        }
    }

    pub fn conjugate(&self) -> Quad {
        Quad::new(self.rat.clone(), -self.irr.clone(), self.d.clone())
    }

    /// Field norm `rat^2 - d irr^2`.
    pub fn norm(&self) -> BigRational {
        &self.rat * &self.rat - BigRational::from_integer(self.d.clone()) * &self.irr * &self.irr
    }

    pub fn is_rational(&self) -> bool {
        self.irr.is_zero()
    }

    /// Recognizes `x` as a root of `A x^2 + B x + C` with integer coefficients
    /// of absolute value at most `height`, returning the exact root closest
    /// to `x` within relative tolerance `rel_tol`. Rationals are recognized
    /// as degenerate quadratics. Callers must verify the result exactly.
    pub fn recognize(x: f64, height: i64, rel_tol: f64) -> Option<Quad> {
        if !x.is_finite() {
            return None;
        }
        let tol = rel_tol * (1.0 + x.abs()).powi(2);
        let mut best: Option<(f64, Quad)> = None;
        // rational first: B x + C = 0
        for b in 1..=height {
            let c = (-(b as f64) * x).round();
            if c.abs() <= height as f64 && (b as f64 * x + c).abs() < tol {
                let q = Quad::rational(rat(-(c as i64), b));
                return Some(q);
            }
        }
        for a in 1..=height {
            for b in -height..=height {
                let c = (-(a as f64) * x * x - b as f64 * x).round();
                if c.abs() > height as f64 {
                    continue;
                }
                let resid = a as f64 * x * x + b as f64 * x + c;
                if resid.abs() >= tol {
                    continue;
                }
                let disc = BigInt::from(b * b) - BigInt::from(4 * a) * BigInt::from(c as i64);
                if disc.is_negative() {
                    continue;
                }
                let (square, free) = split_square(&disc);
                let two_a = BigInt::from(2 * a);
                let centre = BigRational::new(BigInt::from(-b), two_a.clone());
                let half_width = BigRational::new(square, two_a);
                for sign in [1i32, -1] {
                    let irr = if sign > 0 { half_width.clone() } else { -half_width.clone() };
                    let cand = Quad::new(centre.clone(), irr, free.clone());
                    let err = (cand.approx() - x).abs();
                    if err < rel_tol * (1.0 + x.abs())
                        && best.as_ref().is_none_or(|(e, _)| err < *e)
                    {
                        best = Some((err, cand));
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        best.map(|(_, q)| q)
    }
}

/// Writes `n = s^2 * f` with `f` squarefree; returns `(s, f)`.
fn split_square(n: &BigInt) -> (BigInt, BigInt) {
    if n.is_zero() {
        return (BigInt::zero(), BigInt::one());
    }
    let mut rest = n.clone();
    let mut square = BigInt::one();
    let mut p = BigInt::from(2);
    while &p * &p <= rest {
        let pp = &p * &p;
        while (&rest % &pp).is_zero() {
            rest /= &pp;
            square *= &p;
        }
        p += 1;
    }
    (square, rest)
}

impl PartialEq for Quad {
    fn eq(&self, other: &Self) -> bool {
        self.rat == other.rat
            && self.irr == other.irr
            && (self.irr.is_zero() || self.d == other.d)
    }
}

impl fmt::Display for Quad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.irr.is_zero() {
            write!(f, "{}", self.rat)
        } else {
            write!(f, "{} + {}*sqrt({})", self.rat, self.irr, self.d)
        }
    }
}

impl Add for Quad {
    type Output = Quad;
    fn add(self, rhs: Quad) -> Quad {
        let d = self.field(&rhs);
        Quad::new(self.rat + rhs.rat, self.irr + rhs.irr, d)
    }
}

impl Sub for Quad {
    type Output = Quad;
    fn sub(self, rhs: Quad) -> Quad {
        let d = self.field(&rhs);
        Quad::new(self.rat - rhs.rat, self.irr - rhs.irr, d)
    }
}

impl Neg for Quad {
    type Output = Quad;
    fn neg(self) -> Quad {
        Quad::new(-self.rat, -self.irr, self.d)
    }
}

impl Mul for Quad {
    type Output = Quad;
    fn mul(self, rhs: Quad) -> Quad {
        let d = self.field(&rhs);
        let dq = BigRational::from_integer(d.clone());
        let rat = &self.rat * &rhs.rat + dq * &self.irr * &rhs.irr;
        let irr = &self.rat * &rhs.irr + &self.irr * &rhs.rat;
        Quad::new(rat, irr, d)
    }
}

impl Div for Quad {
    type Output = Quad;
    fn div(self, rhs: Quad) -> Quad {
        let n = rhs.norm();
        assert!(!n.is_zero(), "division by zero in quadratic field");
        let num = self * rhs.conjugate();
        Quad::new(num.rat / &n, num.irr / &n, num.d)
    }
}

impl Zero for Quad {
    fn zero() -> Self {
        Quad::rational(BigRational::zero())
    }
    fn is_zero(&self) -> bool {
        self.rat.is_zero() && self.irr.is_zero()
    }
}

impl One for Quad {
    fn one() -> Self {
        Quad::rational(BigRational::one())
    }
}

impl Scalar for Quad {
    fn from_rational(q: &BigRational) -> Self {
        Quad::rational(q.clone())
    }
    fn approx(&self) -> f64 {
        let r = self.rat.to_f64().unwrap_or(f64::NAN);
        if self.irr.is_zero() {
            return r;
        }
        let s = self.irr.to_f64().unwrap_or(f64::NAN);
        let d = self.d.to_f64().unwrap_or(f64::NAN);
        r + s * d.sqrt()
    }
}

/// Integer gcd helper for rational vectors.
pub fn lcm_of_denominators<'a>(xs: impl IntoIterator<Item = &'a BigRational>) -> BigInt {
    xs.into_iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}
