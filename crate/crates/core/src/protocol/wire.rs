//! Byte-level helpers for the tagged binary format.
//!
//! Documents start with the 4-byte magic `CPDD` and a 1-byte version, then
//! carry a sequence of fields, each prefixed by its 4-byte little-endian
//! length. Integers are little-endian throughout.

use thiserror::Error;

use crate::field::{FieldElement, FieldError, FieldVector, Modulus};

pub const MAGIC: [u8; 4] = *b"CPDD";
pub const VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated input while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl WireError {
    pub(crate) fn invalid(what: &'static str, detail: impl ToString) -> Self {
        WireError::Invalid {
            what,
            detail: detail.to_string(),
        }
    }
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    /// Starts a document with magic and version.
    pub fn document() -> Self {
        let mut w = Writer::new();
        w.bytes(&MAGIC);
        w.u8(VERSION);
        w
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
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

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn vector(&mut self, v: &FieldVector) -> &mut Self {
        v.write_bytes(&mut self.buf);
        self
    }

    /// Writes a length-prefixed field whose contents are produced by `f`.
    pub fn field(&mut self, f: impl FnOnce(&mut Writer)) -> &mut Self {
        let mut inner = Writer::new();
        f(&mut inner);
        self.u32(inner.buf.len() as u32);
        self.buf.extend_from_slice(&inner.buf);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    /// Checks magic and version, leaving the reader at the first field.
    pub fn document(buf: &'a [u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        if r.take(4, "magic")? != MAGIC {
            return Err(WireError::BadMagic);
        }
        let version = r.u8("version")?;
        if version != VERSION {
            return Err(WireError::UnsupportedVersion(version));
        }
        Ok(r)
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).ok_or(WireError::Truncated(what))?;
        let out = self
            .buf
            .get(self.pos..end)
            .ok_or(WireError::Truncated(what))?;
        self.pos = end;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], WireError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    pub fn bool(&mut self, what: &'static str) -> Result<bool, WireError> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(WireError::invalid(what, format!("flag byte {b}"))),
        }
    }

    pub fn vector(&mut self, modulus: Modulus) -> Result<FieldVector, WireError> {
        let (v, used) = FieldVector::read_bytes(modulus, &self.buf[self.pos..])?;
        self.pos += used;
        Ok(v)
    }

    pub fn element(
        &mut self,
        modulus: Modulus,
        what: &'static str,
    ) -> Result<FieldElement, WireError> {
        Ok(FieldElement::new(self.u64(what)?, modulus)?)
    }

    /// Reads a length-prefixed field and returns a reader over its contents.
    pub fn field(&mut self, what: &'static str) -> Result<Reader<'a>, WireError> {
        let len = self.u32(what)? as usize;
        Ok(Reader::new(self.take(len, what)?))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::TrailingBytes(n)),
        }
    }
}
