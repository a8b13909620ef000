//! Little-endian byte cursor and builder shared by the binary formats.

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    what: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(what: &'static str, buf: &'a [u8]) -> Self {
        Self { what, buf, pos: 0 }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::format(
                    self.what,
                    format!(
                        "truncated: needed {n} bytes at offset {} but only {} remain",
                        self.pos,
                        self.buf.len() - self.pos
                    ),
                )
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.bytes(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn i8(&mut self) -> Result<i8> {
        Ok(self.array::<1>()?[0] as i8)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.bytes(
            n.checked_mul(4)
                .ok_or_else(|| Error::format(self.what, "length overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// `u8` length followed by ASCII bytes.
    pub fn short_str(&mut self) -> Result<String> {
        let n = self.u8()? as usize;
        let raw = self.bytes(n)?;
        if !raw.is_ascii() {
            return Err(Error::format(self.what, "non-ASCII string"));
        }
        Ok(String::from_utf8(raw.to_vec()).expect("ascii is utf-8"))
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.bytes(4)?;
        if m != expected {
            return Err(Error::format(
                self.what,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(m),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u16) -> Result<()> {
        let v = self.u16()?;
        if v != expected {
            return Err(Error::Version {
                what: self.what,
                found: v,
                expected,
            });
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.what,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }

    pub fn err(&self, reason: impl Into<String>) -> Error {
        Error::format(self.what, reason)
    }
}

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn i8(&mut self, v: i8) {
        self.buf.push(v as u8);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32_slice(&mut self, v: &[f32]) {
        self.buf.reserve(v.len() * 4);
        for x in v {
            self.f32(*x);
        }
    }

    pub fn short_str(&mut self, s: &str) -> Result<()> {
        if !s.is_ascii() || s.len() > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "name {s:?} must be ASCII and at most 255 bytes"
            )));
        }
        self.u8(s.len() as u8);
        self.bytes(s.as_bytes());
        Ok(())
    }
}

/// Narrowing conversion with a format error on overflow.
pub(crate) fn narrow<T: TryFrom<usize>>(v: usize, field: &str) -> Result<T> {
    T::try_from(v).map_err(|_| Error::InvalidArgument(format!("{field} = {v} does not fit the file format")))
}
