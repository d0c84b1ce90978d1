//! Paillier additively homomorphic encryption with `g = n + 1`, plus fixed-point encoding
//! of reals and a binary key-file container.

mod fixed;
mod keyfile;
mod prime;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub use fixed::{
    decode_fixed, encode_fixed, headroom, max_scale_bits, to_signed, DEFAULT_SCALE_BITS, MAX_TERMS,
};
pub use keyfile::{read_keypair, read_public_key, write_key_files, PUBLIC_KEY_FILE, SECRET_KEY_FILE};
pub use prime::{is_probable_prime, random_below, random_prime, MILLER_RABIN_ROUNDS};

use crate::wire::{Body, BodyError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CryptoError {
    #[error("unsupported key size {0} bits (expected 1024 or 2048)")]
    UnsupportedBits(u32),
    #[error("64-bit keys are insecure and need an explicit opt-in")]
    InsecureKeyRefused,
    #[error("plaintext out of range [0, n)")]
    PlaintextOutOfRange,
    #[error("ciphertext is not a unit modulo n^2")]
    CorruptCiphertext,
    #[error("ciphertext scale exponents differ ({0} vs {1})")]
    ScaleMismatch(i32, i32),
    #[error("cannot encode non-finite value {0}")]
    NonFinite(f64),
    #[error("{value} at {scale_bits} fractional bits exceeds the fixed-point headroom")]
    FixedPointOverflow { value: f64, scale_bits: u32 },
    #[error("invalid toy key: {0}")]
    InvalidPrimes(String),
    #[error("malformed key file: {0}")]
    KeyFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKey {
    lambda: BigUint,
    mu: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    public: PublicKey,
    secret: SecretKey,
}

/// A Paillier ciphertext tagged with the fixed-point exponent of its plaintext
/// (real value = `signed(m) * 2^exponent`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub value: BigUint,
    pub exponent: i32,
}

/// `L(u) = (u - 1) / n`
fn l_function(u: &BigUint, n: &BigUint) -> BigUint {
    (u - 1u32) / n
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Self {
        let bits = n.bits() as u32;
        let n_squared = &n * &n;
        Self { n, n_squared, bits }
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    /// `g = n + 1`
    pub fn g(&self) -> BigUint {
        &self.n + 1u32
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Draws `r` uniformly from the units of `Z_n`.
    pub fn random_nonce<R: RngCore + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = random_below(rng, &self.n);
            if !r.is_zero() && prime::coprime(&r, &self.n) {
                return r;
            }
        }
    }

    /// `c = (1 + n)^m * r^n mod n^2` with an explicit nonce `r`.
    pub fn encrypt_with_nonce(
        &self,
        m: &BigUint,
        r: &BigUint,
        exponent: i32,
    ) -> Result<Ciphertext, CryptoError> {
        if m >= &self.n {
            return Err(CryptoError::PlaintextOutOfRange);
        }
        // (1 + n)^m = 1 + m*n (mod n^2)
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext {
            value: (gm * rn) % &self.n_squared,
            exponent,
        })
    }

    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        m: &BigUint,
        exponent: i32,
        rng: &mut R,
    ) -> Result<Ciphertext, CryptoError> {
        let r = self.random_nonce(rng);
        self.encrypt_with_nonce(m, &r, exponent)
    }

    /// Encrypts a real at `scale_bits` fractional bits.
    pub fn encrypt_real<R: RngCore + ?Sized>(
        &self,
        x: f64,
        scale_bits: u32,
        rng: &mut R,
    ) -> Result<Ciphertext, CryptoError> {
        let m = encode_fixed(x, scale_bits, &self.n)?;
        self.encrypt(&m, -(scale_bits as i32), rng)
    }

    /// Homomorphic addition: `a * b mod n^2`.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CryptoError> {
        if a.exponent != b.exponent {
            return Err(CryptoError::ScaleMismatch(a.exponent, b.exponent));
        }
        Ok(Ciphertext {
            value: (&a.value * &b.value) % &self.n_squared,
            exponent: a.exponent,
        })
    }

    /// Homomorphic multiplication by a non-negative plaintext: `a^k mod n^2`.
    pub fn scalar_mul(&self, a: &Ciphertext, k: &BigUint) -> Ciphertext {
        Ciphertext {
            value: a.value.modpow(k, &self.n_squared),
            exponent: a.exponent,
        }
    }

    /// Encryption of zero with nonce 1, the neutral element for [`PublicKey::add`].
    pub fn zero(&self, exponent: i32) -> Ciphertext {
        Ciphertext {
            value: BigUint::one(),
            exponent,
        }
    }

    /// Folds `add` over `items`; `None` when empty.
    pub fn sum<'a, I>(&self, items: I) -> Result<Option<Ciphertext>, CryptoError>
    where
        I: IntoIterator<Item = &'a Ciphertext>,
    {
        let mut acc: Option<Ciphertext> = None;
        for ct in items {
            acc = Some(match acc {
                None => ct.clone(),
                Some(a) => self.add(&a, ct)?,
            });
        }
        Ok(acc)
    }
}

impl KeyPair {
    /// Generates a key with an `bits`-bit modulus. Deterministic when `seed` is given.
    pub fn generate(bits: u32, seed: Option<u64>, allow_insecure: bool) -> Result<Self, CryptoError> {
        match bits {
            1024 | 2048 => {}
            64 if allow_insecure => {}
            64 => return Err(CryptoError::InsecureKeyRefused),
            other => return Err(CryptoError::UnsupportedBits(other)),
        }
        let mut rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_os_rng(),
        };
        let half = bits as u64 / 2;
        loop {
            let p = random_prime(half, &mut rng);
            let q = random_prime(half, &mut rng);
            if p == q {
                continue;
            }
            if let Ok(kp) = Self::from_primes(&p, &q) {
                debug_assert_eq!(kp.public.bits, bits);
                return Ok(kp);
            }
        }
    }

    /// Builds a key from explicit primes. Intended for tests and toy examples; it does not
    /// enforce equal prime sizes.
    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<Self, CryptoError> {
        if p == q {
            return Err(CryptoError::InvalidPrimes("p and q must differ".into()));
        }
        if p < &BigUint::from(3u8) || q < &BigUint::from(3u8) {
            return Err(CryptoError::InvalidPrimes("primes must be odd".into()));
        }
        let n = p * q;
        let p1 = p - 1u32;
        let q1 = q - 1u32;
        if !prime::coprime(&n, &(&p1 * &q1)) {
            return Err(CryptoError::InvalidPrimes("gcd(n, phi(n)) != 1".into()));
        }
        let lambda = p1.lcm(&q1);
        let public = PublicKey::from_modulus(n);
        let u = public.g().modpow(&lambda, &public.n_squared);
        let mu = l_function(&u, &public.n)
            .modinv(&public.n)
            .ok_or_else(|| CryptoError::InvalidPrimes("L(g^lambda) is not invertible".into()))?;
        Ok(Self {
            public,
            secret: SecretKey { lambda, mu },
        })
    }

    pub(crate) fn from_parts(n: BigUint, lambda: BigUint, mu: BigUint) -> Self {
        Self {
            public: PublicKey::from_modulus(n),
            secret: SecretKey { lambda, mu },
        }
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn lambda(&self) -> &BigUint {
        &self.secret.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.secret.mu
    }

    /// `m = L(c^lambda mod n^2) * mu mod n`
    pub fn decrypt(&self, ct: &Ciphertext) -> Result<BigUint, CryptoError> {
        let pk = &self.public;
        if ct.value.is_zero() || ct.value >= pk.n_squared || !prime::coprime(&ct.value, &pk.n) {
            return Err(CryptoError::CorruptCiphertext);
        }
        let u = ct.value.modpow(&self.secret.lambda, &pk.n_squared);
        Ok((l_function(&u, &pk.n) * &self.secret.mu) % &pk.n)
    }

    /// Decrypts and decodes a fixed-point ciphertext.
    pub fn decrypt_real(&self, ct: &Ciphertext) -> Result<f64, CryptoError> {
        let m = self.decrypt(ct)?;
        if ct.exponent > 0 {
            return Err(CryptoError::KeyFile(format!(
                "positive exponent {} is not a fixed-point scale",
                ct.exponent
            )));
        }
        Ok(decode_fixed(&m, ct.exponent.unsigned_abs(), &self.public.n))
    }
}

/// Writes a ciphertext array into a body as `BigIntVec` plus an `Int` exponent entry.
/// All ciphertexts must share one exponent.
pub fn put_ciphertexts(
    body: &mut Body,
    key: &str,
    exponent_key: &str,
    cts: &[Ciphertext],
) -> Result<(), CryptoError> {
    let exponent = cts.first().map_or(0, |c| c.exponent);
    if let Some(bad) = cts.iter().find(|c| c.exponent != exponent) {
        return Err(CryptoError::ScaleMismatch(exponent, bad.exponent));
    }
    body.insert(key, cts.iter().map(|c| c.value.clone()).collect::<Vec<_>>());
    body.insert(exponent_key, exponent as i64);
    Ok(())
}

pub fn get_ciphertexts(
    body: &Body,
    key: &str,
    exponent_key: &str,
) -> Result<Vec<Ciphertext>, BodyError> {
    let exponent = body.int(exponent_key)?;
    let exponent = i32::try_from(exponent).map_err(|_| BodyError::Invalid {
        key: exponent_key.to_owned(),
        reason: format!("exponent {exponent} out of range"),
    })?;
    Ok(body
        .big_ints(key)?
        .iter()
        .map(|v| Ciphertext {
            value: v.clone(),
            exponent,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> KeyPair {
        KeyPair::from_primes(&BigUint::from(3u8), &BigUint::from(5u8)).unwrap()
    }

    fn test_key(seed: u64) -> KeyPair {
        KeyPair::generate(64, Some(seed), true).unwrap()
    }

    #[test]
    fn toy_key_parameters() {
        let kp = toy();
        assert_eq!(kp.public().n(), &BigUint::from(15u8));
        assert_eq!(kp.public().g(), BigUint::from(16u8));
        assert_eq!(kp.lambda(), &BigUint::from(4u8));
        assert_eq!(kp.mu(), &BigUint::from(4u8));
    }

    #[test]
    fn toy_encrypt_decrypt() {
        let kp = toy();
        let ct = kp
            .public()
            .encrypt_with_nonce(&BigUint::from(2u8), &BigUint::from(4u8), 0)
            .unwrap();
        assert_eq!(ct.value, BigUint::from(94u8));
        assert_eq!(kp.decrypt(&ct).unwrap(), BigUint::from(2u8));
    }

    #[test]
    fn keygen_is_deterministic_with_seed() {
        let a = test_key(7);
        let b = test_key(7);
        assert_eq!(a.public().n(), b.public().n());
        assert_eq!(a.public().bits(), 64);
        assert_ne!(test_key(8).public().n(), a.public().n());
    }

    #[test]
    fn keygen_size_policy() {
        assert_eq!(
            KeyPair::generate(64, Some(1), false),
            Err(CryptoError::InsecureKeyRefused)
        );
        assert_eq!(
            KeyPair::generate(512, Some(1), true),
            Err(CryptoError::UnsupportedBits(512))
        );
    }

    #[test]
    fn keygen_1024_has_exact_size() {
        let kp = KeyPair::generate(1024, Some(11), false).unwrap();
        assert_eq!(kp.public().n().bits(), 1024);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let m = BigUint::from(123456789u64);
        let ct = kp.public().encrypt(&m, 0, &mut rng).unwrap();
        assert_eq!(kp.decrypt(&ct).unwrap(), m);
    }

    #[test]
    fn zero_and_out_of_range() {
        let kp = test_key(1);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ct = kp.public().encrypt(&BigUint::zero(), 0, &mut rng).unwrap();
        assert!(kp.decrypt(&ct).unwrap().is_zero());
        let n = kp.public().n().clone();
        assert_eq!(
            kp.public().encrypt(&n, 0, &mut rng),
            Err(CryptoError::PlaintextOutOfRange)
        );
    }

    #[test]
    fn probabilistic_encryption() {
        let kp = test_key(2);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let m = BigUint::from(42u8);
        let a = kp.public().encrypt(&m, 0, &mut rng).unwrap();
        let b = kp.public().encrypt(&m, 0, &mut rng).unwrap();
        assert_ne!(a, b);
        assert_eq!(kp.decrypt(&a).unwrap(), m);
        assert_eq!(kp.decrypt(&b).unwrap(), m);
    }

    #[test]
    fn zero_ciphertext_is_corrupt() {
        let kp = test_key(3);
        let ct = Ciphertext {
            value: BigUint::zero(),
            exponent: 0,
        };
        assert_eq!(kp.decrypt(&ct), Err(CryptoError::CorruptCiphertext));
        // a multiple of n is not a unit either
        let ct = Ciphertext {
            value: kp.public().n().clone(),
            exponent: 0,
        };
        assert_eq!(kp.decrypt(&ct), Err(CryptoError::CorruptCiphertext));
    }

    #[test]
    fn homomorphic_add_and_scalar() {
        let kp = test_key(4);
        let pk = kp.public();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let enc = |m: u32, rng: &mut ChaCha20Rng| pk.encrypt(&BigUint::from(m), 0, rng).unwrap();

        let sum = pk.add(&enc(3, &mut rng), &enc(4, &mut rng)).unwrap();
        assert_eq!(kp.decrypt(&sum).unwrap(), BigUint::from(7u8));

        let ones: Vec<_> = (0..100).map(|_| enc(1, &mut rng)).collect();
        let total = pk.sum(&ones).unwrap().unwrap();
        assert_eq!(kp.decrypt(&total).unwrap(), BigUint::from(100u8));

        let five = enc(5, &mut rng);
        let k = |v: u32| BigUint::from(v);
        assert_eq!(kp.decrypt(&pk.scalar_mul(&five, &k(3))).unwrap(), k(15));
        assert_eq!(kp.decrypt(&pk.scalar_mul(&five, &k(0))).unwrap(), k(0));
        assert_eq!(kp.decrypt(&pk.scalar_mul(&five, &k(1))).unwrap(), k(5));

        let scaled = pk.encrypt(&k(1), -10, &mut rng).unwrap();
        assert_eq!(pk.add(&five, &scaled), Err(CryptoError::ScaleMismatch(0, -10)));
    }

    #[test]
    fn real_values_round_trip_through_encryption() {
        let kp = test_key(5);
        let pk = kp.public();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let bits = max_scale_bits(pk.n(), 1.0);
        let a = pk.encrypt_real(0.75, bits, &mut rng).unwrap();
        let b = pk.encrypt_real(-0.25, bits, &mut rng).unwrap();
        let s = pk.add(&a, &b).unwrap();
        assert_eq!(kp.decrypt_real(&s).unwrap(), 0.5);
    }

    #[test]
    fn ciphertext_body_helpers() {
        let kp = test_key(6);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let cts: Vec<_> = (0..3u32)
            .map(|m| kp.public().encrypt(&BigUint::from(m), -5, &mut rng).unwrap())
            .collect();
        let mut body = Body::new();
        put_ciphertexts(&mut body, "c", "e", &cts).unwrap();
        assert_eq!(get_ciphertexts(&body, "c", "e").unwrap(), cts);
    }
}
