use serde::{Deserialize, Serialize};

/// A bit string: `bits` valid bits stored MSB-first in `bytes`.
///
/// Invariants: `bytes.len() == ceil(bits / 8)` and all bits past `bits` are
/// zero, so structural equality equals bit-string equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BitChunk {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitChunk {
    pub fn empty() -> Self {
        BitChunk { bytes: Vec::new(), bits: 0 }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let bits = bytes.len() as u64 * 8;
        BitChunk { bytes, bits }
    }

    /// Truncates or zero-extends `bytes` to exactly `bits` bits.
    pub fn from_bits(mut bytes: Vec<u8>, bits: u64) -> Self {
        let need = Self::byte_len(bits);
        bytes.resize(need, 0);
        if bits % 8 != 0 {
            let keep = bits % 8;
            let mask = !(0xffu8 >> keep);
            if let Some(last) = bytes.last_mut() {
                *last &= mask;
            }
        }
        BitChunk { bytes, bits }
    }

    pub fn zeros(bits: u64) -> Self {
        BitChunk { bytes: vec![0; Self::byte_len(bits)], bits }
    }

    fn byte_len(bits: u64) -> usize {
        bits.div_ceil(8) as usize
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: u64) -> bool {
        debug_assert!(i < self.bits);
        let byte = self.bytes[(i / 8) as usize];
        byte >> (7 - (i % 8)) & 1 == 1
    }

    /// Copies `len` bits starting at `start`; reads past the end come back
    /// as zeros, which is exactly the zero-padding rule for the last data
    /// fragment of an object.
    pub fn slice(&self, start: u64, len: u64) -> BitChunk {
        let mut out = vec![0u8; Self::byte_len(len)];
        let avail = self.bits.saturating_sub(start).min(len);
        let off = (start % 8) as u32;
        for (o, out_byte) in out.iter_mut().enumerate().take((avail as usize).div_ceil(8)) {
            let idx = (start / 8) as usize + o;
            let hi = self.bytes.get(idx).copied().unwrap_or(0) << off;
            let lo = if off == 0 {
                0
            } else {
                self.bytes.get(idx + 1).copied().unwrap_or(0) >> (8 - off)
            };
            *out_byte = hi | lo;
        }
        BitChunk::from_bits(out, len).truncated(avail).padded_to(len)
    }

    /// Keeps the first `bits` bits, zeroing the rest of the final byte.
    pub fn truncated(&self, bits: u64) -> BitChunk {
        assert!(bits <= self.bits, "cannot truncate {} to {}", self.bits, bits);
        BitChunk::from_bits(self.bytes[..Self::byte_len(bits)].to_vec(), bits)
    }

    /// Zero-extends to `bits` bits.
    pub fn padded_to(&self, bits: u64) -> BitChunk {
        assert!(bits >= self.bits);
        let mut bytes = self.bytes.clone();
        bytes.resize(Self::byte_len(bits), 0);
        BitChunk { bytes, bits }
    }

    pub fn concat(pieces: &[&BitChunk]) -> BitChunk {
        let total: u64 = pieces.iter().map(|p| p.bits).sum();
        let mut bytes = vec![0u8; Self::byte_len(total)];
        let mut at = 0u64;
        for p in pieces {
            let off = (at % 8) as u32;
            let base = (at / 8) as usize;
            if off == 0 {
                bytes[base..base + p.bytes.len()].copy_from_slice(&p.bytes);
            } else {
                for (i, b) in p.bytes.iter().enumerate() {
                    bytes[base + i] |= b >> off;
                    let spill = (*b as u16) << (8 - off);
                    if base + i + 1 < bytes.len() {
                        bytes[base + i + 1] |= spill as u8;
                    }
                }
            }
            at += p.bits;
        }
        BitChunk::from_bits(bytes, total)
    }

    /// Big-endian read of up to 64 bits starting at `start`.
    pub fn read_u64(&self, start: u64, len: u32) -> u64 {
        assert!(len <= 64);
        let mut v = 0u64;
        for i in 0..len as u64 {
            v <<= 1;
            if start + i < self.bits && self.bit(start + i) {
                v |= 1;
            }
        }
        v
    }

    pub fn of_u64(value: u64, len: u32) -> BitChunk {
        assert!(len <= 64);
        let mut c = BitChunk::zeros(len as u64);
        for i in 0..len as u64 {
            if value >> (len as u64 - 1 - i) & 1 == 1 {
                c.bytes[(i / 8) as usize] |= 1 << (7 - (i % 8));
            }
        }
        c
    }
}

impl std::fmt::Debug for BitChunk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitChunk({} bits)", self.bits)
    }
}
