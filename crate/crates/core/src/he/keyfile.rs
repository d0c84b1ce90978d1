//! Binary key container.
//!
//! ```text
//! public.key: "FLPK" | bits u32 | n
//! secret.key: "FLSK" | bits u32 | n | lambda | mu
//! ```
//!
//! Each big integer is `u32 byte-length | little-endian magnitude`, the same convention as
//! `BigIntVec` entries on the wire.

use std::path::{Path, PathBuf};

use num_bigint::BigUint;

use super::{CryptoError, KeyPair, PublicKey};
use crate::wire::big_to_bytes;

pub const PUBLIC_KEY_FILE: &str = "public.key";
pub const SECRET_KEY_FILE: &str = "secret.key";

const PUBLIC_MAGIC: &[u8; 4] = b"FLPK";
const SECRET_MAGIC: &[u8; 4] = b"FLSK";

fn put_big(out: &mut Vec<u8>, v: &BigUint) {
    let mag = big_to_bytes(v);
    out.extend_from_slice(&(mag.len() as u32).to_le_bytes());
    out.extend_from_slice(&mag);
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CryptoError> {
        if self.0.len() < n {
            return Err(CryptoError::KeyFile("truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CryptoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn big(&mut self) -> Result<BigUint, CryptoError> {
        let len = self.u32()? as usize;
        Ok(BigUint::from_bytes_le(self.take(len)?))
    }
}

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = PUBLIC_MAGIC.to_vec();
        out.extend_from_slice(&self.bits.to_le_bytes());
        put_big(&mut out, &self.n);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut c = Cursor(bytes);
        if c.take(4)? != PUBLIC_MAGIC {
            return Err(CryptoError::KeyFile("not a public key".into()));
        }
        let bits = c.u32()?;
        let n = c.big()?;
        if !c.0.is_empty() {
            return Err(CryptoError::KeyFile("trailing bytes".into()));
        }
        let pk = PublicKey::from_modulus(n);
        if pk.bits != bits {
            return Err(CryptoError::KeyFile(format!(
                "declared {bits} bits but modulus has {}",
                pk.bits
            )));
        }
        Ok(pk)
    }
}

impl KeyPair {
    pub fn secret_to_bytes(&self) -> Vec<u8> {
        let mut out = SECRET_MAGIC.to_vec();
        out.extend_from_slice(&self.public.bits.to_le_bytes());
        put_big(&mut out, &self.public.n);
        put_big(&mut out, &self.secret.lambda);
        put_big(&mut out, &self.secret.mu);
        out
    }

    pub fn secret_from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut c = Cursor(bytes);
        if c.take(4)? != SECRET_MAGIC {
            return Err(CryptoError::KeyFile("not a secret key".into()));
        }
        let bits = c.u32()?;
        let n = c.big()?;
        let lambda = c.big()?;
        let mu = c.big()?;
        if !c.0.is_empty() {
            return Err(CryptoError::KeyFile("trailing bytes".into()));
        }
        let kp = KeyPair::from_parts(n, lambda, mu);
        if kp.public.bits != bits {
            return Err(CryptoError::KeyFile(format!(
                "declared {bits} bits but modulus has {}",
                kp.public.bits
            )));
        }
        Ok(kp)
    }
}

/// Writes `public.key` and `secret.key` into `dir`, returning their paths.
pub fn write_key_files(kp: &KeyPair, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let public = dir.join(PUBLIC_KEY_FILE);
    let secret = dir.join(SECRET_KEY_FILE);
    std::fs::write(&public, kp.public.to_bytes())?;
    std::fs::write(&secret, kp.secret_to_bytes())?;
    Ok((public, secret))
}

fn read(path: &Path) -> Result<Vec<u8>, CryptoError> {
    std::fs::read(path).map_err(|e| CryptoError::KeyFile(format!("{}: {e}", path.display())))
}

pub fn read_public_key(path: &Path) -> Result<PublicKey, CryptoError> {
    PublicKey::from_bytes(&read(path)?)
}

pub fn read_keypair(path: &Path) -> Result<KeyPair, CryptoError> {
    KeyPair::secret_from_bytes(&read(path)?)
}
