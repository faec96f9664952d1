//! Canonical byte encoding for everything that is hashed or persisted.
//!
//! The layout is the compatibility contract for block hashes and chain
//! files: fixed field order, big-endian integers, u32 length prefixes on
//! variable-length data, bit strings as ASCII '0'/'1', hashes as raw 32
//! bytes. Decoding errors carry the byte offset where the input broke so
//! corrupt files can be reported precisely.

use crate::hash::Hash256;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated input at byte {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("invalid utf-8 at byte {offset} while reading {what}")]
    Utf8 { offset: usize, what: &'static str },
    #[error("unknown tag {tag} at byte {offset} while reading {what}")]
    UnknownTag {
        offset: usize,
        tag: u8,
        what: &'static str,
    },
    #[error("{extra} trailing bytes at byte {offset}")]
    Trailing { offset: usize, extra: usize },
    #[error("length {len} at byte {offset} exceeds remaining input while reading {what}")]
    LengthOverrun {
        offset: usize,
        len: usize,
        what: &'static str,
    },
}

/// Canonical encoder.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_hash(&mut self, h: &Hash256) {
        self.buf.extend_from_slice(h);
    }

    /// Length-prefixed byte run.
    pub fn put_bytes(&mut self, data: &[u8]) {
        self.put_u32(data.len() as u32);
        self.buf.extend_from_slice(data);
    }

    /// Length-prefixed UTF-8 string. Bit strings use this with '0'/'1' text.
    pub fn put_str(&mut self, s: &str) {
        self.put_bytes(s.as_bytes());
    }

    /// Element count prefix for a list; the caller writes the elements.
    pub fn put_count(&mut self, n: usize) {
        self.put_u32(n as u32);
    }
}

/// Canonical decoder with offset tracking.
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated {
                offset: self.pos,
                what,
            });
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn take_u8(&mut self, what: &'static str) -> Result<u8, CodecError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn take_u16(&mut self, what: &'static str) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn take_u32(&mut self, what: &'static str) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn take_u64(&mut self, what: &'static str) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn take_hash(&mut self, what: &'static str) -> Result<Hash256, CodecError> {
        Ok(self.take(32, what)?.try_into().unwrap())
    }

    pub fn take_bytes(&mut self, what: &'static str) -> Result<&'a [u8], CodecError> {
        let offset = self.pos;
        let len = self.take_u32(what)? as usize;
        if self.remaining() < len {
            return Err(CodecError::LengthOverrun { offset, len, what });
        }
        self.take(len, what)
    }

    pub fn take_str(&mut self, what: &'static str) -> Result<String, CodecError> {
        let offset = self.pos;
        let bytes = self.take_bytes(what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::Utf8 { offset, what })
    }

    /// Reads an element count, rejecting any count whose elements cannot
    /// fit in the remaining input so corrupt data never drives allocation.
    pub fn take_count(
        &mut self,
        what: &'static str,
        min_element_size: usize,
    ) -> Result<usize, CodecError> {
        let offset = self.pos;
        let n = self.take_u32(what)? as usize;
        if n.saturating_mul(min_element_size.max(1)) > self.remaining() {
            return Err(CodecError::LengthOverrun { offset, len: n, what });
        }
        Ok(n)
    }

    /// Decoding must consume the whole input.
    pub fn finish(self) -> Result<(), CodecError> {
        if self.remaining() > 0 {
            return Err(CodecError::Trailing {
                offset: self.pos,
                extra: self.remaining(),
            });
        }
        Ok(())
    }
}
