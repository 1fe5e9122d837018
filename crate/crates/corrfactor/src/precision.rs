//! Multi-precision helpers bridging exact rationals and `rug::Float`.

use rug::Float;

use crate::rational::Rat;

/// Working precision in bits for a requested number of decimal digits,
/// with guard bits for accumulated rounding.
pub fn digits_to_bits(digits: u32) -> u32 {
    (digits as f64 * std::f64::consts::LOG2_10).ceil() as u32 + 32
}

/// Float of given precision from f64.
pub fn big(bits: u32, x: f64) -> Float {
    Float::with_val(bits, x)
}

/// Float of given precision from an exact rational (correctly rounded).
pub fn big_rat(bits: u32, r: &Rat) -> Float {
    let n = rug::Integer::from_str_radix(&r.numer().to_str_radix(16), 16).unwrap();
    let d = rug::Integer::from_str_radix(&r.denom().to_str_radix(16), 16).unwrap();
    Float::with_val(bits, rug::Rational::from((n, d)))
}

/// 8 pi^2, the angular measure factor for S states.
pub fn eight_pi_sq(bits: u32) -> Float {
    let pi = Float::with_val(bits, rug::float::Constant::Pi);
    8 * pi.square()
}

/// erf(x) in plain f64 via a short multi-precision evaluation.
pub fn erf_f64(x: f64) -> f64 {
    Float::with_val(64, x).erf().to_f64()
}
