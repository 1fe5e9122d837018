//! Exact rational arithmetic helpers: cached factorials, binomials, and
//! conversions between decimal strings, floats, and `BigRational`.

use std::sync::RwLock;

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use once_cell::sync::Lazy;

use crate::error::{Error, Result};

/// Exact rational scalar used throughout the crate.
pub type Rat = num_rational::BigRational;

static FACTORIALS: Lazy<RwLock<Vec<BigInt>>> = Lazy::new(|| RwLock::new(vec![BigInt::one()]));

/// n! as an exact integer, cached across calls.
pub fn fact(n: u64) -> BigInt {
    let n = n as usize;
    {
        let cache = FACTORIALS.read().unwrap();
        if n < cache.len() {
            return cache[n].clone();
        }
    }
    let mut cache = FACTORIALS.write().unwrap();
    while cache.len() <= n {
        let k = cache.len();
        let next = cache[k - 1].clone() * BigInt::from(k);
        cache.push(next);
    }
    cache[n].clone()
}

/// Binomial coefficient C(n, k) as an exact integer; zero when k > n.
pub fn binom(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    fact(n) / (fact(k) * fact(n - k))
}

/// Rational n/d from machine integers.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Rational from a machine integer.
pub fn rat_i(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Rational that round-trips to the finite f64 `x`, via its shortest
/// decimal form. Short literals such as 1.84833 become small fractions
/// (184833/100000) instead of 2^52-denominator dyadics, which keeps the
/// integers in downstream exact arithmetic manageable.
pub fn rat_from_f64(x: f64) -> Result<Rat> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite value {x}")));
    }
    parse_decimal(&format!("{x}"))
}

/// base^e for integer e of either sign; errors on 0^negative.
pub fn pow_i(base: &Rat, e: i64) -> Result<Rat> {
    if base.is_zero() && e < 0 {
        return Err(Error::Domain("zero base with negative exponent".into()));
    }
    if e >= 0 {
        Ok(num_traits::pow::pow(base.clone(), e as usize))
    } else {
        Ok(num_traits::pow::pow(base.clone(), (-e) as usize).recip())
    }
}

/// Parse a decimal literal (optional sign, fraction, e-notation) into an
/// exact rational, e.g. "-2.891254" or "1.5e-3".
pub fn parse_decimal(s: &str) -> Result<Rat> {
    let s = s.trim();
    let err = || Error::Config(format!("invalid decimal literal {s:?}"));
    if s.is_empty() {
        return Err(err());
    }
    let (mantissa, exp10) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..].parse().map_err(|_| err())?;
            (&s[..pos], e)
        }
        None => (s, 0i64),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(pos) => (&digits[..pos], &digits[pos + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    let all: String = format!("{int_part}{frac_part}");
    if !all.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let numer: BigInt = all.parse().map_err(|_| err())?;
    let numer = if neg { -numer } else { numer };
    let shift = exp10 - frac_part.len() as i64;
    let ten = rat_i(10);
    Ok(Rat::from_integer(numer) * pow_i(&ten, shift)?)
}

/// Nearest f64 to an exact rational.
pub fn rat_to_f64(r: &Rat) -> f64 {
    // Scale so numerator/denominator both fit in f64 without overflow.
    let (n, d) = (r.numer(), r.denom());
    if let (Some(nf), Some(df)) = (n.to_f64(), d.to_f64()) {
        if nf.is_finite() && df.is_finite() && df != 0.0 {
            return nf / df;
        }
    }
    let bits_n = n.bits() as i64;
    let bits_d = d.bits() as i64;
    let shift = (bits_n.max(bits_d) - 900).max(0) as u64;
    let sign = if n.sign() == Sign::Minus { -1.0 } else { 1.0 };
    let nf = (n.abs() >> shift).to_f64().unwrap_or(f64::INFINITY);
    let df = (d.abs() >> shift).to_f64().unwrap_or(f64::INFINITY);
    sign * nf / df
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials_and_binomials() {
        assert_eq!(fact(0), BigInt::from(1));
        assert_eq!(fact(5), BigInt::from(120));
        assert_eq!(fact(10), BigInt::from(3628800u64));
        assert_eq!(binom(6, 3), BigInt::from(20));
        assert_eq!(binom(3, 5), BigInt::zero());
    }

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(parse_decimal("1.84833").unwrap(), rat(184833, 100000));
        assert_eq!(parse_decimal("-2.891254").unwrap(), rat(-2891254, 1000000));
        assert_eq!(parse_decimal("1.5e-3").unwrap(), rat(15, 10000));
        assert_eq!(parse_decimal("3").unwrap(), rat_i(3));
        assert!(parse_decimal("abc").is_err());
        assert!(parse_decimal("").is_err());
    }

    #[test]
    fn float_round_trip() {
        for &x in &[0.5, -1.25, 1.84833, 3e-7, 123456.789] {
            let r = rat_from_f64(x).unwrap();
            assert_eq!(rat_to_f64(&r), x);
        }
    }

    #[test]
    fn integer_powers() {
        let half = rat(1, 2);
        assert_eq!(pow_i(&half, 3).unwrap(), rat(1, 8));
        assert_eq!(pow_i(&half, -2).unwrap(), rat_i(4));
        assert_eq!(pow_i(&half, 0).unwrap(), rat_i(1));
        assert!(pow_i(&Rat::zero(), -1).is_err());
    }
}
