//! Signed fixed-point encoding of reals into the plaintext ring `Z_n`.
//!
//! A mantissa `m` above `n / 2` represents the negative value `m - n`. The real value of
//! a mantissa at `scale_bits = F` is `signed(m) * 2^-F`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{FromPrimitive, ToPrimitive, Zero};

use super::CryptoError;

pub const DEFAULT_SCALE_BITS: u32 = 48;

/// Homomorphic sums of up to this many encoded values cannot wrap around `n / 2`.
pub const MAX_TERMS: u64 = 1 << 20;

/// Largest admissible mantissa magnitude (exclusive) for modulus `n`.
pub fn headroom(n: &BigUint) -> BigUint {
    n / (BigUint::from(MAX_TERMS) * 2u32)
}

/// Largest scale (capped at [`DEFAULT_SCALE_BITS`]) that still encodes values of magnitude
/// up to `bound` inside the headroom of `n`.
pub fn max_scale_bits(n: &BigUint, bound: f64) -> u32 {
    let limit = headroom(n);
    let mut bits = DEFAULT_SCALE_BITS;
    loop {
        let scaled = (bound.abs() * 2f64.powi(bits as i32)).ceil();
        let fits = BigUint::from_f64(scaled).is_some_and(|v| v < limit);
        if fits || bits == 0 {
            return bits;
        }
        bits -= 1;
    }
}

pub fn encode_fixed(x: f64, scale_bits: u32, n: &BigUint) -> Result<BigUint, CryptoError> {
    if !x.is_finite() {
        return Err(CryptoError::NonFinite(x));
    }
    let scaled = (x * 2f64.powi(scale_bits as i32)).round();
    let signed = BigInt::from_f64(scaled).ok_or(CryptoError::NonFinite(x))?;
    let magnitude = signed.magnitude();
    if magnitude >= &headroom(n) {
        return Err(CryptoError::FixedPointOverflow { value: x, scale_bits });
    }
    Ok(match signed.sign() {
        Sign::Minus => n - magnitude,
        _ => magnitude.clone(),
    })
}

/// Maps a ring element to its signed representative.
pub fn to_signed(m: &BigUint, n: &BigUint) -> BigInt {
    let half = n >> 1;
    if m > &half {
        -BigInt::from(n - m)
    } else {
        BigInt::from(m.clone())
    }
}

pub fn decode_fixed(m: &BigUint, scale_bits: u32, n: &BigUint) -> f64 {
    let signed = to_signed(m, n);
    if signed.is_zero() {
        return 0.0;
    }
    let value = signed.to_f64().unwrap_or(f64::NAN);
    value * 2f64.powi(-(scale_bits as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modulus() -> BigUint {
        // a 1024-bit stand-in; only its size matters here
        (BigUint::from(1u8) << 1023u32) + 12345u32
    }

    #[test]
    fn zero_encodes_to_zero() {
        assert!(encode_fixed(0.0, 48, &modulus()).unwrap().is_zero());
        assert!(encode_fixed(-0.0, 48, &modulus()).unwrap().is_zero());
    }

    #[test]
    fn one_and_a_half() {
        let m = encode_fixed(1.5, 48, &modulus()).unwrap();
        assert_eq!(m, BigUint::from(3u8) << 47u32);
    }

    #[test]
    fn negative_range_mapping() {
        let n = modulus();
        let m = &n - (BigUint::from(1u8) << 48u32);
        assert_eq!(decode_fixed(&m, 48, &n), -1.0);
        assert_eq!(encode_fixed(-1.0, 48, &n).unwrap(), m);
    }

    #[test]
    fn overflow_is_rejected() {
        let n = BigUint::from(u64::MAX);
        assert!(matches!(
            encode_fixed(1.0, 48, &n),
            Err(CryptoError::FixedPointOverflow { .. })
        ));
        assert!(encode_fixed(f64::NAN, 10, &n).is_err());
    }

    #[test]
    fn scale_selection_respects_headroom() {
        let n = BigUint::from(u64::MAX);
        let bits = max_scale_bits(&n, 1.0);
        assert!(encode_fixed(1.0, bits, &n).is_ok());
        assert!(encode_fixed(1.0, bits + 1, &n).is_err());
        assert_eq!(max_scale_bits(&modulus(), 1.0), DEFAULT_SCALE_BITS);
    }
}
