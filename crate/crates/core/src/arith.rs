//! Exact arithmetic helpers: big rationals, dyadic conversions and numbers of
//! the form `a + b·√m` used for radii such as `√d·2^p + 3√d`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: impl Into<BigInt>) -> Rational {
    BigRational::from_integer(n.into())
}

pub fn pow2(e: u32) -> BigInt {
    BigInt::one() << e as usize
}

pub fn pow2u(e: u32) -> BigUint {
    BigUint::one() << e as usize
}

/// `num / 2^e` as an exact rational.
pub fn dyadic(num: BigInt, e: u32) -> Rational {
    BigRational::new(num, pow2(e))
}

/// Exact rational value of a finite float (every finite f64 is dyadic).
pub fn rational_from_f64(x: f64) -> Rational {
    BigRational::from_float(x).expect("finite float")
}

pub fn rational_to_f64(q: &Rational) -> f64 {
    match (q.numer().to_f64(), q.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() && d != 0.0 => n / d,
        _ => {
            // Scale both sides down to keep the ratio representable.
            let nb = q.numer().bits() as i64;
            let db = q.denom().bits() as i64;
            let shift = (nb.max(db) - 1000).max(0) as usize;
            let n = (q.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (q.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
            n / d
        }
    }
}

/// Parse "3", "-1/2", "0.75" or "1e-3" into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Ok(n) = s.parse::<BigInt>() {
        return Some(BigRational::from_integer(n));
    }
    let x: f64 = s.parse().ok()?;
    if !x.is_finite() {
        return None;
    }
    // Decimal strings are read as their exact decimal value, not the float.
    let (mantissa, exp) = match s.to_ascii_lowercase().split_once('e') {
        Some((m, e)) => (m.to_string(), e.parse::<i32>().ok()?),
        None => (s.to_string(), 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((&mantissa, ""));
    let digits = format!("{int_part}{frac_part}");
    let n: BigInt = digits.parse().ok()?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Some(if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Exact decimal rendering of a rational whose denominator is a power of two.
/// Returns `None` for other denominators.
pub fn dyadic_decimal(q: &Rational) -> Option<String> {
    let den = q.denom();
    if den.is_zero() || (den & (den - BigInt::one())) != BigInt::zero() {
        return None;
    }
    let k = den.bits() - 1;
    let neg = q.numer().is_negative();
    let num = q.numer().abs();
    let (whole, frac) = num.div_rem(den);
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push_str(&whole.to_string());
    if !frac.is_zero() {
        // frac / 2^k = frac * 5^k / 10^k
        let digits = (frac * num_traits::pow(BigInt::from(5), k as usize)).to_string();
        let padded = format!("{:0>width$}", digits, width = k as usize);
        out.push('.');
        out.push_str(padded.trim_end_matches('0'));
    }
    Some(out)
}

/// A real number `a + b·√m` with rational `a`, `b` and a fixed positive
/// integer radicand `m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Surd {
    pub a: Rational,
    pub b: Rational,
    pub m: u32,
}

impl Surd {
    pub fn rational(a: Rational) -> Self {
        Surd { a, b: Rational::zero(), m: 1 }
    }

    pub fn int(a: i64) -> Self {
        Surd::rational(rat_int(a))
    }

    /// `b·√m`
    pub fn root(b: Rational, m: u32) -> Self {
        assert!(m >= 1, "radicand must be positive");
        let r = (m as f64).sqrt().round() as u32;
        if r * r == m {
            return Surd::rational(b * rat_int(r));
        }
        Surd { a: Rational::zero(), b, m }
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    fn radicand_with(&self, other: &Surd) -> u32 {
        match (self.b.is_zero(), other.b.is_zero()) {
            (true, true) => 1,
            (false, true) => self.m,
            (true, false) => other.m,
            (false, false) => {
                assert_eq!(self.m, other.m, "mixed radicands are not supported");
                self.m
            }
        }
    }

    pub fn add(&self, other: &Surd) -> Surd {
        let m = self.radicand_with(other);
        Surd { a: &self.a + &other.a, b: &self.b + &other.b, m }
    }

    pub fn sub(&self, other: &Surd) -> Surd {
        let m = self.radicand_with(other);
        Surd { a: &self.a - &other.a, b: &self.b - &other.b, m }
    }

    pub fn scale(&self, k: &Rational) -> Surd {
        Surd { a: &self.a * k, b: &self.b * k, m: self.m }
    }

    pub fn square(&self) -> Surd {
        let m_r = rat_int(self.m);
        Surd {
            a: &self.a * &self.a + &self.b * &self.b * m_r,
            b: &self.a * &self.b * rat_int(2),
            m: self.m,
        }
    }

    pub fn signum(&self) -> i32 {
        let sa = sign(&self.a);
        let sb = sign(&self.b);
        if sb == 0 {
            return sa;
        }
        if sa == 0 || sa == sb {
            return sb;
        }
        let a2 = &self.a * &self.a;
        let b2m = &self.b * &self.b * rat_int(self.m);
        match a2.cmp(&b2m) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => 0,
        }
    }

    pub fn cmp_surd(&self, other: &Surd) -> Ordering {
        self.sub(other).signum().cmp(&0)
    }

    pub fn cmp_rational(&self, q: &Rational) -> Ordering {
        self.cmp_surd(&Surd::rational(q.clone()))
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.a) + rational_to_f64(&self.b) * (self.m as f64).sqrt()
    }

    /// Largest integer `k` with `k <= self`.
    pub fn floor(&self) -> BigInt {
        let mut k = BigInt::from(self.to_f64().floor() as i128);
        while self.cmp_rational(&rat_int(k.clone())) == Ordering::Less {
            k -= 1;
        }
        while self.cmp_rational(&rat_int(&k + 1)) != Ordering::Less {
            k += 1;
        }
        k
    }

    /// Largest integer `k` with `k < self`.
    pub fn floor_strict(&self) -> BigInt {
        let k = self.floor();
        if self.cmp_rational(&rat_int(k.clone())) == Ordering::Equal {
            k - 1
        } else {
            k
        }
    }
}

fn sign(q: &Rational) -> i32 {
    if q.is_zero() {
        0
    } else if q.is_negative() {
        -1
    } else {
        1
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a.is_zero(), self.b.is_zero()) {
            (_, true) => write!(f, "{}", self.a),
            (true, false) => write!(f, "{}·√{}", self.b, self.m),
            (false, false) => write!(f, "{} + {}·√{}", self.a, self.b, self.m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surd_sign_handles_cancellation() {
        // 3 - 2√2 > 0, 2 - √5 < 0, 3 - √9 == 0
        assert_eq!(Surd { a: rat_int(3), b: rat_int(-2), m: 2 }.signum(), 1);
        assert_eq!(Surd { a: rat_int(2), b: rat_int(-1), m: 5 }.signum(), -1);
        assert_eq!(Surd::root(rat_int(-1), 9).add(&Surd::int(3)).signum(), 0);
    }

    #[test]
    fn surd_floor_is_exact() {
        // √2·1024 = 1448.15...
        let s = Surd::root(rat_int(1024), 2);
        assert_eq!(s.floor(), BigInt::from(1448));
        assert_eq!(Surd::int(5).floor_strict(), BigInt::from(4));
        assert_eq!(Surd::rational(rat(9, 2)).floor_strict(), BigInt::from(4));
        // (2 + 3√2)^2 = 22 + 12√2 = 38.97
        assert_eq!(Surd { a: rat_int(2), b: rat_int(3), m: 2 }.square().floor(), BigInt::from(38));
    }

    #[test]
    fn decimal_rendering_is_exact() {
        assert_eq!(dyadic_decimal(&rat(-3, 4)).unwrap(), "-0.75");
        assert_eq!(dyadic_decimal(&rat(5, 2)).unwrap(), "2.5");
        assert_eq!(dyadic_decimal(&rat(7, 1)).unwrap(), "7");
        assert_eq!(dyadic_decimal(&rat(1, 1 << 20)).unwrap(), "0.00000095367431640625");
        assert!(dyadic_decimal(&rat(1, 3)).is_none());
    }

    #[test]
    fn parses_decimal_and_fraction() {
        assert_eq!(parse_rational("0.8").unwrap(), rat(4, 5));
        assert_eq!(parse_rational("-1/2").unwrap(), rat(-1, 2));
        assert_eq!(parse_rational("12").unwrap(), rat_int(12));
        assert_eq!(parse_rational("1e-2").unwrap(), rat(1, 100));
        assert!(parse_rational("abc").is_none());
    }
}
