//! Little-endian byte cursor shared by every binary format in the crate.

use thiserror::Error;

/// Corruption classes for the binary formats. Each class is a distinct variant
/// so callers (and tests) can tell a wrong file from a damaged one.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u8, supported: u8 },
    #[error("truncated input: needed {needed} more bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("size inconsistency: {0}")]
    SizeMismatch(String),
    #[error("invalid UTF-8 in {field}")]
    InvalidUtf8 { field: &'static str },
    #[error("invalid value for {field}: {detail}")]
    InvalidField { field: &'static str, detail: String },
}

#[derive(Debug, Default)]
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            buf: Vec::with_capacity(capacity),
        }
    }

    pub fn bytes(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32_slice(&mut self, values: &[f32]) {
        self.buf.reserve(values.len() * 4);
        for v in values {
            self.f32(*v);
        }
    }

    /// u16 length prefix followed by UTF-8 bytes.
    pub fn short_str(&mut self, field: &'static str, s: &str) -> Result<(), FormatError> {
        let len = u16::try_from(s.len()).map_err(|_| FormatError::InvalidField {
            field,
            detail: format!("{} bytes exceeds u16 length prefix", s.len()),
        })?;
        self.u16(len);
        self.bytes(s.as_bytes());
        Ok(())
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.remaining(),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let raw = self.take(4)?;
        if raw != expected {
            let mut found = [0u8; 4];
            found.copy_from_slice(raw);
            return Err(FormatError::BadMagic {
                expected: *expected,
                found,
            });
        }
        Ok(())
    }

    pub fn version(&mut self, supported: u8) -> Result<u8, FormatError> {
        let found = self.u8()?;
        if found != supported {
            return Err(FormatError::UnsupportedVersion { found, supported });
        }
        Ok(found)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        let b = self.take(8)?;
        let mut arr = [0u8; 8];
        arr.copy_from_slice(b);
        Ok(u64::from_le_bytes(arr))
    }

    pub fn f32(&mut self) -> Result<f32, FormatError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = count.checked_mul(4).ok_or_else(|| {
            FormatError::SizeMismatch(format!("{count} f32 values overflow the address space"))
        })?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    pub fn short_str(&mut self, field: &'static str) -> Result<String, FormatError> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| FormatError::InvalidUtf8 { field })
    }

    /// Fails with [`FormatError::SizeMismatch`] if unread bytes remain.
    pub fn finish(&self) -> Result<(), FormatError> {
        if self.remaining() != 0 {
            return Err(FormatError::SizeMismatch(format!(
                "{} trailing bytes after offset {}",
                self.remaining(),
                self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reader_reports_truncation_with_offsets() {
        let mut r = ByteReader::new(&[1, 2, 3]);
        assert_eq!(r.u16().unwrap(), 0x0201);
        let err = r.u32().unwrap_err();
        assert_eq!(
            err,
            FormatError::Truncated {
                offset: 2,
                needed: 4,
                available: 1
            }
        );
    }

    #[test]
    fn strings_and_scalars_round_trip() {
        let mut w = ByteWriter::new();
        w.short_str("id", "bottle/000").unwrap();
        w.u64(u64::MAX - 3);
        w.f32(-0.0);
        let bytes = w.into_inner();
        let mut r = ByteReader::new(&bytes);
        assert_eq!(r.short_str("id").unwrap(), "bottle/000");
        assert_eq!(r.u64().unwrap(), u64::MAX - 3);
        assert_eq!(r.f32().unwrap().to_bits(), (-0.0f32).to_bits());
        r.finish().unwrap();
    }
}
