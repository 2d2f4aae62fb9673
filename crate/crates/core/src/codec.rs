//! Little-endian byte helpers shared by the dataset and checkpoint containers.
//!
//! Both containers are `magic | version u32 | body | crc32(everything before)`.

use crate::error::FormatError;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, leaving the cursor at the start of the body.
    pub fn open(buf: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self, FormatError> {
        let mut r = Reader { buf, pos: 0 };
        let found = r.take(4)?;
        if found != magic {
            let mut f = [0u8; 4];
            f.copy_from_slice(found);
            return Err(FormatError::BadMagic {
                expected: *magic,
                found: f,
            });
        }
        let v = r.u32()?;
        if v != version {
            return Err(FormatError::Version {
                found: v,
                supported: version,
            });
        }
        // Trailing checksum must exist; the body is everything before it.
        if buf.len() < r.pos + 4 {
            return Err(FormatError::Truncated {
                offset: r.pos,
                needed: 4,
                available: buf.len() - r.pos,
            });
        }
        r.buf = &buf[..buf.len() - 4];
        Ok(r)
    }

    /// Verifies the trailing CRC-32 against everything before it.
    pub fn verify_checksum(full: &[u8]) -> Result<(), FormatError> {
        let (body, tail) = full.split_at(full.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Fails with `Truncated` unless `n` more bytes are available.
    pub fn ensure(&self, n: usize) -> Result<(), FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.remaining(),
            });
        }
        Ok(())
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        self.ensure(n)?;
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| self.overflow())?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.overflow())?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Raw bytes of a length-prefixed string; UTF-8 is validated by callers
    /// after the checksum passes.
    pub fn str_bytes(&mut self) -> Result<&'a [u8], FormatError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn overflow(&self) -> FormatError {
        FormatError::Truncated {
            offset: self.pos,
            needed: usize::MAX,
            available: self.remaining(),
        }
    }
}

pub(crate) fn utf8(bytes: &[u8], what: &str) -> Result<String, FormatError> {
    String::from_utf8(bytes.to_vec())
        .map_err(|_| FormatError::Malformed(format!("{what} is not valid UTF-8")))
}
