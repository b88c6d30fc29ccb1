//! Byte-level encoding helpers.
//!
//! All integers are little-endian. Variable-length fields carry a u32 length
//! prefix. Every top-level object starts with [`WIRE_VERSION`]. Decoders must
//! consume their input exactly; trailing bytes are a malformed-serialization
//! error, and every error reports the offset of the first violation.

use thiserror::Error;

/// Version byte leading every serialized top-level object and frame.
pub const WIRE_VERSION: u8 = 1;

/// Hard cap on any single length-prefixed field. Keeps a hostile length
/// prefix from turning into a giant allocation.
pub const MAX_FIELD_LEN: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed input at offset {offset}: {what}")]
    Malformed { offset: usize, what: &'static str },
    #[error("unsupported version {got} at offset {offset}")]
    Version { offset: usize, got: u8 },
}

impl WireError {
    pub fn malformed(offset: usize, what: &'static str) -> Self {
        WireError::Malformed { offset, what }
    }

    /// Offset of the first violation, for diagnostics.
    pub fn offset(&self) -> usize {
        match self {
            WireError::Malformed { offset, .. } | WireError::Version { offset, .. } => *offset,
        }
    }
}

/// Append-only encoder. Infallible; length limits are the decoder's problem.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    /// Starts a top-level object: emits the version byte.
    pub fn versioned() -> Self {
        let mut w = Writer::new();
        w.u8(WIRE_VERSION);
        w
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    /// Fixed-width field: raw bytes, no length prefix.
    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    /// Variable-width field: u32 length prefix then bytes.
    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        debug_assert!(v.len() <= MAX_FIELD_LEN);
        self.u32(v.len() as u32);
        self.raw(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor-based decoder tracking the current offset for error reporting.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    /// Starts a top-level object: checks the version byte.
    pub fn versioned(buf: &'a [u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let v = r.u8()?;
        if v != WIRE_VERSION {
            return Err(WireError::Version { offset: 0, got: v });
        }
        Ok(r)
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::malformed(self.pos, what));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1, "truncated u8")?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2, "truncated u16")?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.take(4, "truncated u32")?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8, "truncated u64")?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    /// Fixed-width field.
    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        self.take(n, "truncated fixed-width field")
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N, "truncated fixed-width field")?);
        Ok(out)
    }

    /// Variable-width field: u32 length prefix then bytes.
    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        if n > MAX_FIELD_LEN {
            return Err(WireError::malformed(at, "field length over limit"));
        }
        self.take(n, "truncated variable-width field")
    }

    pub fn str(&mut self) -> Result<&'a str, WireError> {
        let at = self.pos;
        let b = self.bytes()?;
        std::str::from_utf8(b).map_err(|_| WireError::malformed(at, "invalid utf-8"))
    }

    /// Declares the object complete. Trailing bytes are an error.
    pub fn finish(self) -> Result<(), WireError> {
        if self.remaining() != 0 {
            return Err(WireError::malformed(self.pos, "trailing bytes"));
        }
        Ok(())
    }
}
