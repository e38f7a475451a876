//! Packed bit sequences.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A packed bit sequence with an explicit length.
///
/// Bits are stored MSB-first within each byte; bit `i` of the stream is bit
/// `7 - i % 8` of byte `i / 8`. Pad bits past `len` are always zero.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct BitStream {
    len: usize,
    bytes: Vec<u8>,
}

impl BitStream {
    pub fn zeros(len: usize) -> Self {
        BitStream {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = BitStream::default();
        for b in bits {
            out.push(b);
        }
        out
    }

    /// Parse a string of `'0'`/`'1'` characters. Whitespace is skipped.
    pub fn from_ascii(s: &str) -> Result<Self> {
        let mut out = BitStream::default();
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                c if c.is_whitespace() => {}
                c => return Err(Error::invalid(format!("not a bit character: {c:?}"))),
            }
        }
        Ok(out)
    }

    /// Wrap packed bytes. Fails unless `bytes.len() == ceil(len / 8)` and
    /// every pad bit is zero.
    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::invalid(format!(
                "payload of {} bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        let s = BitStream { len, bytes };
        if s.pad_mask() & s.bytes.last().copied().unwrap_or(0) != 0 {
            return Err(Error::invalid("nonzero pad bits in payload"));
        }
        Ok(s)
    }

    /// Build from little-endian polynomial words (bit `k` of the stream is
    /// bit `k % 64` of word `k / 64`), truncated to `len` bits.
    pub fn from_words(words: &[u64], len: usize) -> Self {
        assert!(words.len() * 64 >= len, "not enough words for {len} bits");
        let mut bytes = Vec::with_capacity(len.div_ceil(8));
        for w in words.iter().take(len.div_ceil(64)) {
            bytes.extend_from_slice(&w.reverse_bits().to_be_bytes());
        }
        bytes.truncate(len.div_ceil(8));
        let mut s = BitStream { len, bytes };
        s.clear_pad();
        s
    }

    /// Little-endian polynomial words: bit `k` of the stream becomes bit
    /// `k % 64` of word `k / 64`.
    pub fn to_words(&self) -> Vec<u64> {
        let mut words = Vec::with_capacity(self.len.div_ceil(64));
        for chunk in self.bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words.push(u64::from_be_bytes(buf).reverse_bits());
        }
        words
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i >> 3] >> (7 - (i & 7)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let m = 0x80u8 >> (i & 7);
        if v {
            self.bytes[i >> 3] |= m;
        } else {
            self.bytes[i >> 3] &= !m;
        }
    }

    pub fn push(&mut self, v: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        self.len += 1;
        if v {
            let i = self.len - 1;
            self.bytes[i >> 3] |= 0x80 >> (i & 7);
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> u64 {
        self.bytes.iter().map(|b| b.count_ones() as u64).sum()
    }

    /// Bitwise XOR of two equal-length streams.
    pub fn xor(&self, other: &BitStream) -> Result<BitStream> {
        if self.len != other.len {
            return Err(Error::invalid(format!(
                "length mismatch: {} vs {}",
                self.len, other.len
            )));
        }
        let bytes = self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect();
        Ok(BitStream { len: self.len, bytes })
    }

    /// Hex SHA-256 of the packed payload.
    pub fn sha256_hex(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }

    fn pad_mask(&self) -> u8 {
        match self.len % 8 {
            0 => 0,
            r => 0xFFu8 >> r,
        }
    }

    fn clear_pad(&mut self) {
        let m = self.pad_mask();
        if let Some(last) = self.bytes.last_mut() {
            *last &= !m;
        }
    }
}

impl std::fmt::Debug for BitStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let preview: String = self.iter().take(64).map(|b| if b { '1' } else { '0' }).collect();
        let ellipsis = if self.len > 64 { "..." } else { "" };
        write!(f, "BitStream({} bits: {preview}{ellipsis})", self.len)
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<T: IntoIterator<Item = bool>>(iter: T) -> Self {
        BitStream::from_bits(iter)
    }
}
