//! Little-endian readers and writers shared by the binary file formats.

use crate::error::{Error, Result};

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedFile {
            offset: self.pos,
            needed: usize::MAX,
        })?;
        if end > self.buf.len() {
            return Err(Error::TruncatedFile {
                offset: self.pos,
                needed: end,
            });
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &'static [u8; 4]) -> Result<()> {
        let found = self.take(4)?;
        if found != expected {
            return Err(Error::BadMagic {
                found: found.to_vec(),
                expected,
            });
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads `len` floats. A short buffer reports the offset of the first
    /// float that is not fully present.
    pub fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = len.checked_mul(8).ok_or(Error::DimOverflow {
            rows: len as u64,
            cols: 8,
        })?;
        let available = self.buf.len() - self.pos;
        if bytes > available {
            let whole = available / 8;
            return Err(Error::TruncatedFile {
                offset: self.pos + whole * 8,
                needed: self.pos + bytes,
            });
        }
        let out = self.buf[self.pos..self.pos + bytes]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        self.pos += bytes;
        Ok(out)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::TrailingBytes {
                offset: self.pos,
                count: self.buf.len() - self.pos,
            });
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Converts a dimension to its on-disk u32 form.
pub(crate) fn dim_u32(rows: usize, cols: usize) -> Result<(u32, u32)> {
    match (u32::try_from(rows), u32::try_from(cols)) {
        (Ok(r), Ok(c)) => Ok((r, c)),
        _ => Err(Error::DimOverflow {
            rows: rows as u64,
            cols: cols as u64,
        }),
    }
}

/// Element count for on-disk dims, rejecting products that cannot be
/// addressed.
pub(crate) fn element_count(rows: u32, cols: u32) -> Result<usize> {
    (rows as usize)
        .checked_mul(cols as usize)
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or(Error::DimOverflow {
            rows: rows as u64,
            cols: cols as u64,
        })
}
