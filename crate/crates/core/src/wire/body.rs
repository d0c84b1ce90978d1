use indexmap::IndexMap;
use num_bigint::BigUint;

use super::WireError;

/// Row-major matrix of binary64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMat {
    rows: u32,
    cols: u32,
    data: Vec<f64>,
}

impl FloatMat {
    pub fn new(rows: u32, cols: u32, data: Vec<f64>) -> Result<Self, WireError> {
        let expected = rows as u64 * cols as u64;
        if expected != data.len() as u64 {
            return Err(WireError::MatrixShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// A single value carried in a message body.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyValue {
    Int(i64),
    Float(f64),
    Str(String),
    FloatVec(Vec<f64>),
    FloatMat(FloatMat),
    Bytes(Vec<u8>),
    /// Arbitrary-precision non-negative integers, used for ciphertext arrays.
    BigIntVec(Vec<BigUint>),
}

impl BodyValue {
    pub(crate) fn tag(&self) -> u8 {
        match self {
            BodyValue::Int(_) => 0,
            BodyValue::Float(_) => 1,
            BodyValue::Str(_) => 2,
            BodyValue::FloatVec(_) => 3,
            BodyValue::FloatMat(_) => 4,
            BodyValue::Bytes(_) => 5,
            BodyValue::BigIntVec(_) => 6,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BodyValue::Int(_) => "Int",
            BodyValue::Float(_) => "Float",
            BodyValue::Str(_) => "Str",
            BodyValue::FloatVec(_) => "FloatVec",
            BodyValue::FloatMat(_) => "FloatMat",
            BodyValue::Bytes(_) => "Bytes",
            BodyValue::BigIntVec(_) => "BigIntVec",
        }
    }
}

impl From<i64> for BodyValue {
    fn from(v: i64) -> Self {
        BodyValue::Int(v)
    }
}

impl From<f64> for BodyValue {
    fn from(v: f64) -> Self {
        BodyValue::Float(v)
    }
}

impl From<&str> for BodyValue {
    fn from(v: &str) -> Self {
        BodyValue::Str(v.to_owned())
    }
}

impl From<String> for BodyValue {
    fn from(v: String) -> Self {
        BodyValue::Str(v)
    }
}

impl From<Vec<f64>> for BodyValue {
    fn from(v: Vec<f64>) -> Self {
        BodyValue::FloatVec(v)
    }
}

impl From<FloatMat> for BodyValue {
    fn from(v: FloatMat) -> Self {
        BodyValue::FloatMat(v)
    }
}

impl From<Vec<u8>> for BodyValue {
    fn from(v: Vec<u8>) -> Self {
        BodyValue::Bytes(v)
    }
}

impl From<Vec<BigUint>> for BodyValue {
    fn from(v: Vec<BigUint>) -> Self {
        BodyValue::BigIntVec(v)
    }
}

/// Errors raised when reading typed fields out of a [`Body`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BodyError {
    #[error("missing body key {0:?}")]
    Missing(String),
    #[error("body key {key:?}: expected {expected}, found {found}")]
    WrongType {
        key: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("body key {key:?}: {reason}")]
    Invalid { key: String, reason: String },
}

/// Insertion-ordered dictionary body of a message.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Body {
    entries: IndexMap<String, BodyValue>,
}

macro_rules! typed_getter {
    ($name:ident, $variant:ident, $ty:ty) => {
        pub fn $name(&self, key: &str) -> Result<&$ty, BodyError> {
            match self.require(key)? {
                BodyValue::$variant(v) => Ok(v),
                other => Err(BodyError::WrongType {
                    key: key.to_owned(),
                    expected: stringify!($variant),
                    found: other.kind_name(),
                }),
            }
        }
    };
}

impl Body {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `key`. Replacing keeps the original position.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<BodyValue>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<BodyValue>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&BodyValue> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BodyValue)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn require(&self, key: &str) -> Result<&BodyValue, BodyError> {
        self.entries
            .get(key)
            .ok_or_else(|| BodyError::Missing(key.to_owned()))
    }

    pub fn int(&self, key: &str) -> Result<i64, BodyError> {
        match self.require(key)? {
            BodyValue::Int(v) => Ok(*v),
            other => Err(BodyError::WrongType {
                key: key.to_owned(),
                expected: "Int",
                found: other.kind_name(),
            }),
        }
    }

    pub fn float(&self, key: &str) -> Result<f64, BodyError> {
        match self.require(key)? {
            BodyValue::Float(v) => Ok(*v),
            other => Err(BodyError::WrongType {
                key: key.to_owned(),
                expected: "Float",
                found: other.kind_name(),
            }),
        }
    }

    /// Reads a non-negative `Int` as `usize`.
    pub fn index(&self, key: &str) -> Result<usize, BodyError> {
        let v = self.int(key)?;
        usize::try_from(v).map_err(|_| BodyError::Invalid {
            key: key.to_owned(),
            reason: format!("expected a non-negative integer, got {v}"),
        })
    }

    /// Reads a `FloatVec` whose entries are sample ids (exact non-negative integers).
    pub fn ids(&self, key: &str) -> Result<Vec<u64>, BodyError> {
        self.float_vec(key)?
            .iter()
            .map(|&x| {
                if x >= 0.0 && x.fract() == 0.0 && x <= (1u64 << 53) as f64 {
                    Ok(x as u64)
                } else {
                    Err(BodyError::Invalid {
                        key: key.to_owned(),
                        reason: format!("{x} is not a valid sample id"),
                    })
                }
            })
            .collect()
    }

    typed_getter!(str, Str, String);
    typed_getter!(float_vec, FloatVec, Vec<f64>);
    typed_getter!(float_mat, FloatMat, FloatMat);
    typed_getter!(bytes, Bytes, Vec<u8>);
    typed_getter!(big_ints, BigIntVec, Vec<BigUint>);
}

impl FromIterator<(String, BodyValue)> for Body {
    fn from_iter<T: IntoIterator<Item = (String, BodyValue)>>(iter: T) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Converts sample ids into the `FloatVec` representation used on the wire.
pub fn ids_to_floats(ids: &[u64]) -> Vec<f64> {
    ids.iter().map(|&id| id as f64).collect()
}
