//! Binary framing of request/response messages.
//!
//! Frame layout (all fixed-width integers little-endian):
//!
//! ```text
//! "FLA1" | payload-length u32 | payload
//! payload = kind u8 | phase_id i32 | sender str16 | receiver str16 | entry-count u16 | entries
//! entry   = key str16 | tag u8 | value
//! ```
//!
//! Value tags: 0 Int (i64), 1 Float (f64), 2 Str (str16), 3 FloatVec (u32 count + f64s),
//! 4 FloatMat (u32 rows, u32 cols, row-major f64s), 5 Bytes (u32 + octets),
//! 6 BigIntVec (u32 count; each u32 byte-length + little-endian magnitude).

mod body;

use std::io::{Read, Write};

use num_bigint::BigUint;

pub use body::{ids_to_floats, Body, BodyError, BodyValue, FloatMat};

pub const MAGIC: [u8; 4] = *b"FLA1";
pub const HEADER_LEN: usize = 8;

/// Upper bound on a single frame accepted from a stream.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Request,
    Response,
}

impl MessageKind {
    fn to_byte(self) -> u8 {
        match self {
            MessageKind::Request => 0,
            MessageKind::Response => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: String,
    pub receiver: String,
    pub phase_id: i32,
    pub body: Body,
}

impl Message {
    pub fn request(
        sender: impl Into<String>,
        receiver: impl Into<String>,
        phase_id: i32,
        body: Body,
    ) -> Self {
        Self {
            kind: MessageKind::Request,
            sender: sender.into(),
            receiver: receiver.into(),
            phase_id,
            body,
        }
    }

    /// Builds the response to `self` with sender/receiver swapped and the phase echoed.
    pub fn reply(&self, body: Body) -> Self {
        Self {
            kind: MessageKind::Response,
            sender: self.receiver.clone(),
            receiver: self.sender.clone(),
            phase_id: self.phase_id,
            body,
        }
    }

    /// Error response: body `{"error": Str}`.
    pub fn error_reply(&self, reason: impl Into<String>) -> Self {
        self.reply(Body::new().with(ERROR_KEY, reason.into()))
    }

    /// The error text carried by a response, if any.
    pub fn error(&self) -> Option<&str> {
        match self.body.get(ERROR_KEY) {
            Some(BodyValue::Str(s)) => Some(s),
            _ => None,
        }
    }
}

pub const ERROR_KEY: &str = "error";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("declared payload length {declared} but {actual} bytes follow")]
    LengthMismatch { declared: u64, actual: u64 },
    #[error("truncated frame while reading {0}")]
    Truncated(&'static str),
    #[error("unknown value tag {tag} for key {key:?}")]
    UnknownTag { key: String, tag: u8 },
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("duplicate body key {0:?}")]
    DuplicateKey(String),
    #[error("invalid UTF-8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("{trailing} trailing bytes after last entry")]
    TrailingBytes { trailing: usize },
    #[error("string of {0} bytes exceeds 65535")]
    StringTooLong(usize),
    #[error("{0} body entries exceed 65535")]
    TooManyEntries(usize),
    #[error("sequence of {0} elements exceeds u32 range")]
    SequenceTooLong(usize),
    #[error("matrix {rows}x{cols} does not match {len} elements")]
    MatrixShape { rows: u32, cols: u32, len: usize },
    #[error("sender and receiver are both {0:?}")]
    SelfAddressed(String),
    #[error("frame of {0} bytes exceeds the accepted maximum")]
    FrameTooLarge(u64),
}

/// Encodes a message into a complete frame.
pub fn encode_message(m: &Message) -> Result<Vec<u8>, WireError> {
    if m.sender == m.receiver {
        return Err(WireError::SelfAddressed(m.sender.clone()));
    }
    let mut payload = Vec::with_capacity(64);
    payload.push(m.kind.to_byte());
    payload.extend_from_slice(&m.phase_id.to_le_bytes());
    put_str(&mut payload, &m.sender)?;
    put_str(&mut payload, &m.receiver)?;
    let count = u16::try_from(m.body.len()).map_err(|_| WireError::TooManyEntries(m.body.len()))?;
    payload.extend_from_slice(&count.to_le_bytes());
    for (key, value) in m.body.iter() {
        put_str(&mut payload, key)?;
        payload.push(value.tag());
        put_value(&mut payload, value)?;
    }
    let len = u32::try_from(payload.len()).map_err(|_| WireError::SequenceTooLong(payload.len()))?;
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&MAGIC);
    frame.extend_from_slice(&len.to_le_bytes());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), WireError> {
    let len = u16::try_from(s.len()).map_err(|_| WireError::StringTooLong(s.len()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_u32_len(out: &mut Vec<u8>, len: usize) -> Result<(), WireError> {
    let len = u32::try_from(len).map_err(|_| WireError::SequenceTooLong(len))?;
    out.extend_from_slice(&len.to_le_bytes());
    Ok(())
}

/// Little-endian magnitude; zero encodes as the empty byte string.
pub(crate) fn big_to_bytes(v: &BigUint) -> Vec<u8> {
    if v.bits() == 0 {
        Vec::new()
    } else {
        v.to_bytes_le()
    }
}

fn put_value(out: &mut Vec<u8>, value: &BodyValue) -> Result<(), WireError> {
    match value {
        BodyValue::Int(v) => out.extend_from_slice(&v.to_le_bytes()),
        BodyValue::Float(v) => out.extend_from_slice(&v.to_le_bytes()),
        BodyValue::Str(s) => put_str(out, s)?,
        BodyValue::FloatVec(v) => {
            put_u32_len(out, v.len())?;
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        BodyValue::FloatMat(m) => {
            if m.rows() as u64 * m.cols() as u64 != m.data().len() as u64 {
                return Err(WireError::MatrixShape {
                    rows: m.rows(),
                    cols: m.cols(),
                    len: m.data().len(),
                });
            }
            out.extend_from_slice(&m.rows().to_le_bytes());
            out.extend_from_slice(&m.cols().to_le_bytes());
            for x in m.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        BodyValue::Bytes(b) => {
            put_u32_len(out, b.len())?;
            out.extend_from_slice(b);
        }
        BodyValue::BigIntVec(v) => {
            put_u32_len(out, v.len())?;
            for x in v {
                let mag = big_to_bytes(x);
                put_u32_len(out, mag.len())?;
                out.extend_from_slice(&mag);
            }
        }
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or(WireError::Truncated(what))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], WireError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N, what)?);
        Ok(out)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn str(&mut self, what: &'static str) -> Result<String, WireError> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| WireError::InvalidUtf8(what))
    }

    fn f64s(&mut self, count: usize, what: &'static str) -> Result<Vec<f64>, WireError> {
        let bytes = count.checked_mul(8).ok_or(WireError::Truncated(what))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Decodes one complete frame. Rejects anything `encode_message` could not have produced.
pub fn decode_message(frame: &[u8]) -> Result<Message, WireError> {
    if frame.len() < HEADER_LEN {
        return Err(WireError::Truncated("frame header"));
    }
    let magic: [u8; 4] = frame[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let declared = u32::from_le_bytes(frame[4..8].try_into().expect("4 bytes")) as u64;
    let actual = (frame.len() - HEADER_LEN) as u64;
    if declared != actual {
        return Err(WireError::LengthMismatch { declared, actual });
    }
    decode_payload(&frame[HEADER_LEN..])
}

fn decode_payload(payload: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader { buf: payload, pos: 0 };
    let kind = match r.array::<1>("message kind")?[0] {
        0 => MessageKind::Request,
        1 => MessageKind::Response,
        other => return Err(WireError::UnknownKind(other)),
    };
    let phase_id = i32::from_le_bytes(r.array("phase id")?);
    let sender = r.str("sender")?;
    let receiver = r.str("receiver")?;
    if sender == receiver {
        return Err(WireError::SelfAddressed(sender));
    }
    let count = r.u16("entry count")?;
    let mut body = Body::new();
    for _ in 0..count {
        let key = r.str("entry key")?;
        let tag = r.array::<1>("value tag")?[0];
        let value = match tag {
            0 => BodyValue::Int(i64::from_le_bytes(r.array("Int value")?)),
            1 => BodyValue::Float(f64::from_le_bytes(r.array("Float value")?)),
            2 => BodyValue::Str(r.str("Str value")?),
            3 => {
                let n = r.u32("FloatVec count")? as usize;
                BodyValue::FloatVec(r.f64s(n, "FloatVec data")?)
            }
            4 => {
                let rows = r.u32("FloatMat rows")?;
                let cols = r.u32("FloatMat cols")?;
                let n = usize::try_from(rows as u64 * cols as u64)
                    .map_err(|_| WireError::Truncated("FloatMat data"))?;
                let data = r.f64s(n, "FloatMat data")?;
                BodyValue::FloatMat(FloatMat::new(rows, cols, data)?)
            }
            5 => {
                let n = r.u32("Bytes length")? as usize;
                BodyValue::Bytes(r.take(n, "Bytes data")?.to_vec())
            }
            6 => {
                let n = r.u32("BigIntVec count")? as usize;
                // each entry needs at least its 4-byte length prefix
                if n > r.remaining() / 4 {
                    return Err(WireError::Truncated("BigIntVec data"));
                }
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    let len = r.u32("BigInt length")? as usize;
                    items.push(BigUint::from_bytes_le(r.take(len, "BigInt magnitude")?));
                }
                BodyValue::BigIntVec(items)
            }
            tag => return Err(WireError::UnknownTag { key, tag }),
        };
        if body.contains(&key) {
            return Err(WireError::DuplicateKey(key));
        }
        body.insert(key, value);
    }
    if r.remaining() != 0 {
        return Err(WireError::TrailingBytes {
            trailing: r.remaining(),
        });
    }
    Ok(Message {
        kind,
        sender,
        receiver,
        phase_id,
        body,
    })
}

/// Errors from reading or writing frames on a byte stream.
#[derive(Debug, thiserror::Error)]
pub enum FrameIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Reads exactly one frame (header and payload) from `reader`.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Vec<u8>, FrameIoError> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header)?;
    let magic: [u8; 4] = header[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic).into());
    }
    let len = u32::from_le_bytes(header[4..].try_into().expect("4 bytes"));
    if len > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge(len as u64).into());
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + len as usize);
    frame.extend_from_slice(&header);
    frame.resize(HEADER_LEN + len as usize, 0);
    reader.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(frame)
}

pub fn write_message<W: Write>(writer: &mut W, m: &Message) -> Result<(), FrameIoError> {
    let frame = encode_message(m)?;
    writer.write_all(&frame)?;
    writer.flush()?;
    Ok(())
}

pub fn read_message<R: Read>(reader: &mut R) -> Result<Message, FrameIoError> {
    let frame = read_frame(reader)?;
    Ok(decode_message(&frame)?)
}
