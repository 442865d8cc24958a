//! Hashing, bit-granular payloads, Merkle commitments, fragmentation and
//! simulated aggregate signatures.
//!
//! Objects and fragment payloads are measured in bits, not bytes: a fragment
//! carries `ceil(l / (s-1))` bits of an `l`-bit object, which is rarely a
//! whole number of bytes. [`BitChunk`] is the canonical representation: a
//! byte buffer plus an exact bit length, with unused trailing bits forced to
//! zero so equal chunks are byte-equal.

mod chunk;
mod fragment;
mod merkle;
mod sig;

pub use chunk::BitChunk;
pub use fragment::{
    data_fragment_bits, fragment_object, reconstruct_object, Fragment, FragmentSet,
    NONCE_LEN_FIELD_BITS,
};
pub use merkle::{build_merkle, ceil_log2, verify_proof, MerkleProof, MerkleTree};
pub use sig::{add_my_sig, sigma_select, AggregateSignature};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// 256-bit digest. Ordering is lexicographic on the raw bytes; every
/// deterministic tie-break in the protocol that says "smaller digest" uses
/// this order. Serializes as a hex string in human-readable formats so
/// trace and dump files stay greppable.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if s.is_human_readable() {
            s.collect_str(self)
        } else {
            self.0.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        if d.is_human_readable() {
            let text = String::deserialize(d)?;
            let raw = text.as_bytes();
            if raw.len() != 64 {
                return Err(D::Error::custom("digest hex must be 64 characters"));
            }
            let nib = |c: u8| -> Result<u8, D::Error> {
                match c {
                    b'0'..=b'9' => Ok(c - b'0'),
                    b'a'..=b'f' => Ok(c - b'a' + 10),
                    b'A'..=b'F' => Ok(c - b'A' + 10),
                    _ => Err(D::Error::custom("digest hex has a non-hex character")),
                }
            };
            let mut out = [0u8; 32];
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = (nib(raw[2 * i])? << 4) | nib(raw[2 * i + 1])?;
            }
            Ok(Digest(out))
        } else {
            Ok(Digest(<[u8; 32]>::deserialize(d)?))
        }
    }
}

impl Digest {
    pub const BITS: u32 = 256;

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short_hex(&self) -> String {
        self.0[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({}..)", self.short_hex())
    }
}

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Domain separation tags. Leaf/interior tags keep second-preimage attacks
/// from moving subtrees around; the rest keep the independent hash roles
/// (committee seeding, beacon folding, rng streams) from colliding.
pub(crate) mod tag {
    pub const LEAF: u8 = 0x00;
    pub const INTERIOR: u8 = 0x01;
    pub const COMMITTEE: u8 = 0x10;
    pub const BEACON: u8 = 0x11;
    pub const SOLUTION: u8 = 0x12;
    pub const STREAM: u8 = 0x20;
}

pub(crate) fn sha256_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// First independent hash role: derives the committee-selection seed for a
/// slot from the slot index and the epoch beacon.
pub fn hash_committee_seed(slot: u64, beacon: &Digest) -> Digest {
    sha256_parts(&[&[tag::COMMITTEE], &slot.to_be_bytes(), beacon.as_bytes()])
}

/// Second independent hash role: folds an epoch challenge and the picked
/// candidate solution into the next beacon.
pub fn hash_beacon(challenge: &[u8], candidate: &Digest) -> Digest {
    sha256_parts(&[&[tag::BEACON], challenge, candidate.as_bytes()])
}

/// Labelled sub-seed derivation: all randomness in a run flows from the one
/// master seed through these streams, so any component can be replayed in
/// isolation.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update([tag::STREAM]);
    h.update(master.to_be_bytes());
    h.update((label.len() as u64).to_be_bytes());
    h.update(label.as_bytes());
    for i in indices {
        h.update(i.to_be_bytes());
    }
    h.finalize().into()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("fragment count must be at least 2, got {0}")]
    TooFewFragments(u32),
    #[error("object must be non-empty")]
    EmptyObject,
    #[error("nonce length {0} too short to carry the {NONCE_LEN_FIELD_BITS}-bit length field")]
    NonceTooShort(u32),
    #[error("leaf index {index} out of range 1..={count}")]
    LeafIndexOutOfRange { index: u32, count: u32 },
    #[error("fragment set malformed: {0}")]
    BadFragmentSet(&'static str),
}
