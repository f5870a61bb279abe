//! Packed bit sequences, MSB-first within each byte.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitStream {
    bytes: Vec<u8>,
    bit_length: usize,
    /// Free-text provenance.
    pub source: String,
}

impl BitStream {
    pub fn new(source: impl Into<String>) -> Self {
        Self {
            bytes: Vec::new(),
            bit_length: 0,
            source: source.into(),
        }
    }

    pub fn with_capacity(bits: usize, source: impl Into<String>) -> Self {
        Self {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            bit_length: 0,
            source: source.into(),
        }
    }

    /// Wraps packed bytes; bits past `bit_length` in the last byte must be zero.
    pub fn from_bytes(bytes: Vec<u8>, bit_length: usize, source: impl Into<String>) -> Result<Self> {
        if bytes.len() != bit_length.div_ceil(8) {
            return Err(Error::InvalidArgument(format!(
                "{} bytes cannot hold exactly {bit_length} bits",
                bytes.len()
            )));
        }
        let spare = bytes.len() * 8 - bit_length;
        if spare > 0 && bytes[bytes.len() - 1] & ((1u8 << spare) - 1) != 0 {
            return Err(Error::InvalidArgument("non-zero padding in trailing byte".into()));
        }
        Ok(Self {
            bytes,
            bit_length,
            source: source.into(),
        })
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I, source: impl Into<String>) -> Self {
        let mut out = Self::new(source);
        out.extend(bits);
        out
    }

    /// Parses a string of `0`/`1` characters; whitespace is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new("literal");
        for c in text.chars().filter(|c| !c.is_whitespace()) {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                other => {
                    return Err(Error::InvalidArgument(format!("unexpected character {other:?}")))
                }
            }
        }
        Ok(out)
    }

    pub fn push(&mut self, bit: bool) {
        let offset = self.bit_length % 8;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("pushed above") |= 0x80 >> offset;
        }
        self.bit_length += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_word(&mut self, value: u64, width: u32) {
        for i in (0..width).rev() {
            self.push((value >> i) & 1 == 1);
        }
    }

    pub fn len(&self) -> usize {
        self.bit_length
    }

    pub fn is_empty(&self) -> bool {
        self.bit_length == 0
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.bit_length).then(|| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.bit_length).map(move |i| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.iter().collect()
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn complement(&self) -> Self {
        Self::from_bools(self.iter().map(|b| !b), self.source.clone())
    }

    pub fn prefix(&self, n: usize) -> Self {
        Self::from_bools(self.iter().take(n), self.source.clone())
    }
}

impl Extend<bool> for BitStream {
    fn extend<I: IntoIterator<Item = bool>>(&mut self, iter: I) {
        for b in iter {
            self.push(b);
        }
    }
}

impl std::fmt::Display for BitStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
