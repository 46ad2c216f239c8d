//! Little-endian framing shared by the model and pattern file formats.

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: [u8; 4], version: u32) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(&magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, values: &[f64]) {
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], magic: [u8; 4], version: u32) -> Result<Self> {
        let mut r = Self { bytes, pos: 0 };
        let found = r.take(4)?;
        if found != magic {
            return Err(Error::WrongMagic {
                expected: u32::from_be_bytes(magic),
                found: u32::from_be_bytes(found.try_into().unwrap()),
            });
        }
        let v = r.u32()?;
        if v != version {
            return Err(Error::Format(format!(
                "version {v} not supported (expected {version})"
            )));
        }
        Ok(r)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Truncated {
                expected: self.pos.saturating_add(n),
                actual: self.bytes.len(),
            }),
        }
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::DimensionOverflow(format!("{n} reals")))?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}
